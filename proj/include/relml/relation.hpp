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

#ifndef RELML_RELATION_HPP
#define RELML_RELATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relml/error.hpp"
#include "relml/schema.hpp"

namespace relml {

/// How the stored entries of a relation are organised.
enum class Layout {
  // Sorted by coordinate, unique, no entry equal to the default.
  Canonical,
  // Unsorted rows with possibly repeated coordinates (raw join output).
  // Only a SUM aggregate turns it back into a canonical relation.
  Multiset,
  // Every coordinate of the domain stored, sorted (densify output).
  Materialized,
};

/// A sparse tensor encoded as a relation: one integer column per dimension
/// plus a value, with a uniform implicit default for absent coordinates.
/// Relations are immutable once built; all primitives return new ones.
class TensorRelation {
 public:
  TensorRelation() = default;

  explicit TensorRelation(IndexSchema schema, double default_value = 0.0)
      : schema_(std::move(schema)), default_(default_value) {
    if (!std::isfinite(default_)) {
      throw Error(Errc::DomainError, "non-finite default");
    }
  }

  static TensorRelation scalar(double value);

  static TensorRelation from_entries(
      IndexSchema schema,
      const std::vector<std::pair<std::vector<std::int64_t>, double>>& entries,
      double default_value = 0.0);

  const IndexSchema& schema() const noexcept { return schema_; }
  std::size_t rank() const noexcept { return schema_.rank(); }
  double default_value() const noexcept { return default_; }
  Layout layout() const noexcept { return layout_; }
  bool is_canonical() const noexcept { return layout_ == Layout::Canonical; }
  bool has_unique_coords() const noexcept { return layout_ != Layout::Multiset; }

  /// Number of stored entries.
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<const std::int64_t> index(std::size_t k) const noexcept {
    return {coords_.data() + k * rank(), rank()};
  }
  double value(std::size_t k) const noexcept { return values_[k]; }
  std::int64_t key(std::size_t k) const noexcept { return keys_[k]; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Position of the stored entry at `idx`, if any. Requires unique coordinates.
  std::optional<std::size_t> find(std::span<const std::int64_t> idx) const {
    if (!schema_.contains(idx)) return std::nullopt;
    return find_key(schema_.linear_key(idx));
  }

  std::optional<std::size_t> find_key(std::int64_t key) const {
    require_unique("lookup");
    auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
    if (it == keys_.end() || *it != key) return std::nullopt;
    return static_cast<std::size_t>(it - keys_.begin());
  }

  /// Dense-semantics value at a coordinate: the stored value or the default.
  double at(std::span<const std::int64_t> idx) const {
    auto k = find(idx);
    return k ? values_[*k] : default_;
  }
  double at(std::initializer_list<std::int64_t> idx) const {
    return at(std::span<const std::int64_t>(idx.begin(), idx.size()));
  }

  double at_key(std::int64_t key) const {
    auto k = find_key(key);
    return k ? values_[*k] : default_;
  }

  void require_unique(const char* what) const {
    if (layout_ == Layout::Multiset) {
      throw Error(Errc::NonCanonical,
                  std::string(what) + " needs unique coordinates, got a multiset relation");
    }
  }

  /// Checks every structural invariant; throws on the first violation.
  void validate() const {
    const std::size_t n = values_.size();
    if (coords_.size() != n * rank() || keys_.size() != n) {
      throw Error(Errc::InvalidSchema, "storage size mismatch");
    }
    if (!std::isfinite(default_)) throw Error(Errc::DomainError, "non-finite default");
    for (std::size_t k = 0; k < n; ++k) {
      if (!schema_.contains(index(k))) {
        throw Error(Errc::OutOfDomain, "stored index outside " + schema_.to_string());
      }
      if (schema_.linear_key(index(k)) != keys_[k]) {
        throw Error(Errc::InvalidSchema, "stale linear key");
      }
      if (!std::isfinite(values_[k])) throw Error(Errc::DomainError, "non-finite value");
      if (layout_ != Layout::Multiset && k > 0 && keys_[k - 1] >= keys_[k]) {
        throw Error(Errc::DuplicateIndex, "entries unsorted or duplicated");
      }
      if (layout_ == Layout::Canonical && values_[k] == default_) {
        throw Error(Errc::NonCanonical, "stored entry equals default");
      }
    }
    if (layout_ == Layout::Materialized &&
        static_cast<std::int64_t>(n) != schema_.dense_size()) {
      throw Error(Errc::InvalidSchema, "materialized relation is not fully stored");
    }
  }

 private:
  friend class RelationBuilder;

  IndexSchema schema_;
  double default_ = 0.0;
  Layout layout_ = Layout::Canonical;
  std::vector<std::int64_t> coords_;
  std::vector<std::int64_t> keys_;
  std::vector<double> values_;
};

/// Accumulates rows and finishes them into one of the three layouts.
class RelationBuilder {
 public:
  RelationBuilder(IndexSchema schema, double default_value)
      : rel_(std::move(schema), default_value) {}

  const IndexSchema& schema() const noexcept { return rel_.schema_; }

  void reserve(std::size_t n) {
    rel_.coords_.reserve(n * rel_.rank());
    rel_.keys_.reserve(n);
    rel_.values_.reserve(n);
  }

  void push(std::span<const std::int64_t> idx, double value) {
    if (!rel_.schema_.contains(idx)) {
      std::string coord;
      for (auto v : idx) coord += (coord.empty() ? "" : ",") + std::to_string(v);
      throw Error(Errc::OutOfDomain,
                  "index (" + coord + ") outside " + rel_.schema_.to_string());
    }
    push_unchecked(idx, rel_.schema_.linear_key(idx), value);
  }

  void push_unchecked(std::span<const std::int64_t> idx, std::int64_t key, double value) {
    if (!std::isfinite(value)) {
      throw Error(Errc::DomainError, "non-finite value " + std::to_string(value));
    }
    rel_.coords_.insert(rel_.coords_.end(), idx.begin(), idx.end());
    rel_.keys_.push_back(key);
    rel_.values_.push_back(value);
  }

  TensorRelation canonical() && {
    sort_unique();
    drop_defaults();
    rel_.layout_ = Layout::Canonical;
    return std::move(rel_);
  }

  TensorRelation multiset() && {
    rel_.layout_ = Layout::Multiset;
    return std::move(rel_);
  }

  TensorRelation materialized() && {
    sort_unique();
    rel_.layout_ = Layout::Materialized;
    return std::move(rel_);
  }

 private:
  void sort_unique() {
    const std::size_t n = rel_.values_.size();
    const std::size_t rank = rel_.rank();
    bool sorted = true;
    for (std::size_t k = 1; k < n && sorted; ++k) sorted = rel_.keys_[k - 1] < rel_.keys_[k];
    if (sorted) return;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::stable_sort(perm.begin(), perm.end(),
                     [&](std::size_t a, std::size_t b) { return rel_.keys_[a] < rel_.keys_[b]; });
    std::vector<std::int64_t> coords(n * rank), keys(n);
    std::vector<double> values(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t src = perm[k];
      std::copy_n(rel_.coords_.begin() + static_cast<std::ptrdiff_t>(src * rank), rank,
                  coords.begin() + static_cast<std::ptrdiff_t>(k * rank));
      keys[k] = rel_.keys_[src];
      values[k] = rel_.values_[src];
      if (k > 0 && keys[k] == keys[k - 1]) {
        throw Error(Errc::DuplicateIndex, "duplicate index tuple in " + rel_.schema_.to_string());
      }
    }
    rel_.coords_ = std::move(coords);
    rel_.keys_ = std::move(keys);
    rel_.values_ = std::move(values);
  }

  void drop_defaults() {
    const std::size_t rank = rel_.rank();
    std::size_t out = 0;
    for (std::size_t k = 0; k < rel_.values_.size(); ++k) {
      if (rel_.values_[k] == rel_.default_) continue;
      if (out != k) {
        std::copy_n(rel_.coords_.begin() + static_cast<std::ptrdiff_t>(k * rank), rank,
                    rel_.coords_.begin() + static_cast<std::ptrdiff_t>(out * rank));
        rel_.keys_[out] = rel_.keys_[k];
        rel_.values_[out] = rel_.values_[k];
      }
      ++out;
    }
    rel_.coords_.resize(out * rank);
    rel_.keys_.resize(out);
    rel_.values_.resize(out);
  }

  TensorRelation rel_;
};

inline TensorRelation TensorRelation::scalar(double value) {
  RelationBuilder b(IndexSchema{}, 0.0);
  b.push({}, value);
  return std::move(b).canonical();
}

inline TensorRelation TensorRelation::from_entries(
    IndexSchema schema,
    const std::vector<std::pair<std::vector<std::int64_t>, double>>& entries,
    double default_value) {
  RelationBuilder b(std::move(schema), default_value);
  b.reserve(entries.size());
  for (const auto& [idx, v] : entries) {
    if (idx.size() != b.schema().rank()) {
      throw Error(Errc::SchemaMismatch, "entry arity does not match " + b.schema().to_string());
    }
    b.push(idx, v);
  }
  return std::move(b).canonical();
}

}  // namespace relml

#endif  // RELML_RELATION_HPP
