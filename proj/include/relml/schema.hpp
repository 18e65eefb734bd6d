// Copyright 2026 The relml Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RELML_SCHEMA_HPP
#define RELML_SCHEMA_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relml/error.hpp"

namespace relml {

/// One integer index column. Values range over [lo, lo + domain_size).
/// Stored relations always have lo == 0; intermediate results of an affine
/// reindex (e.g. `r - kr` inside a convolution) may start below zero until a
/// range filter re-bases them.
struct Column {
  std::string name;
  std::int64_t domain_size = 1;
  std::int64_t lo = 0;

  std::int64_t hi() const noexcept { return lo + domain_size - 1; }
  bool contains(std::int64_t v) const noexcept { return v >= lo && v <= hi(); }

  friend bool operator==(const Column&, const Column&) = default;
};

/// Ordered index columns of a tensor relation. Coordinates are ordered
/// row-major (first column most significant), which is also the
/// lexicographic order used for deterministic iteration and tie-breaking.
class IndexSchema {
 public:
  // Dense sizes above this are rejected so linear keys never overflow.
  static constexpr std::int64_t kMaxDenseSize = std::int64_t{1} << 60;

  IndexSchema() = default;

  explicit IndexSchema(std::vector<Column> columns) : columns_(std::move(columns)) {
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      if (columns_[k].name.empty()) {
        throw Error(Errc::InvalidSchema, "empty column name");
      }
      if (columns_[k].domain_size < 1) {
        throw Error(Errc::InvalidSchema,
                    "column '" + columns_[k].name + "' has domain_size < 1");
      }
      for (std::size_t j = 0; j < k; ++j) {
        if (columns_[j].name == columns_[k].name) {
          throw Error(Errc::InvalidSchema, "duplicate column '" + columns_[k].name + "'");
        }
      }
    }
    strides_.assign(columns_.size(), 1);
    std::int64_t size = 1;
    for (std::size_t k = columns_.size(); k-- > 0;) {
      strides_[k] = size;
      if (size > kMaxDenseSize / columns_[k].domain_size) {
        throw Error(Errc::TooLarge, "dense domain of " + to_string() + " overflows");
      }
      size *= columns_[k].domain_size;
    }
    dense_size_ = size;
  }

  /// Convenience for the common case of zero-based columns.
  static IndexSchema of(std::initializer_list<std::pair<std::string, std::int64_t>> cols) {
    std::vector<Column> out;
    for (const auto& [name, size] : cols) out.push_back(Column{name, size, 0});
    return IndexSchema(std::move(out));
  }

  std::size_t rank() const noexcept { return columns_.size(); }
  const std::vector<Column>& columns() const noexcept { return columns_; }
  const Column& operator[](std::size_t k) const { return columns_[k]; }
  std::int64_t dense_size() const noexcept { return dense_size_; }

  std::optional<std::size_t> find(std::string_view name) const noexcept {
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      if (columns_[k].name == name) return k;
    }
    return std::nullopt;
  }

  std::size_t index_of(std::string_view name) const {
    if (auto k = find(name)) return *k;
    throw Error(Errc::SchemaMismatch,
                "no column '" + std::string(name) + "' in " + to_string());
  }

  bool contains(std::span<const std::int64_t> idx) const noexcept {
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      if (!columns_[k].contains(idx[k])) return false;
    }
    return true;
  }

  /// Row-major position of an in-domain coordinate.
  std::int64_t linear_key(std::span<const std::int64_t> idx) const noexcept {
    std::int64_t key = 0;
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      key += (idx[k] - columns_[k].lo) * strides_[k];
    }
    return key;
  }

  void unravel(std::int64_t key, std::span<std::int64_t> out) const noexcept {
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      out[k] = key / strides_[k] + columns_[k].lo;
      key %= strides_[k];
    }
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
  }

  std::string to_string() const {
    std::string s = "(";
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      if (k) s += ", ";
      s += columns_[k].name + ":";
      if (columns_[k].lo != 0) s += std::to_string(columns_[k].lo) + "+";
      s += std::to_string(columns_[k].domain_size);
    }
    return s + ")";
  }

  friend bool operator==(const IndexSchema& a, const IndexSchema& b) {
    return a.columns_ == b.columns_;
  }

 private:
  std::vector<Column> columns_;
  std::vector<std::int64_t> strides_;
  std::int64_t dense_size_ = 1;
};

/// Visits every coordinate of `schema` in row-major order.
template <typename Fn>
void for_each_coordinate(const IndexSchema& schema, Fn&& fn) {
  const std::size_t rank = schema.rank();
  std::vector<std::int64_t> idx(rank);
  for (std::size_t k = 0; k < rank; ++k) idx[k] = schema[k].lo;
  for (std::int64_t n = 0; n < schema.dense_size(); ++n) {
    fn(std::span<const std::int64_t>(idx));
    for (std::size_t k = rank; k-- > 0;) {
      if (++idx[k] <= schema[k].hi()) break;
      idx[k] = schema[k].lo;
    }
  }
}

}  // namespace relml

#endif  // RELML_SCHEMA_HPP
