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

#ifndef RELML_AFFINE_HPP
#define RELML_AFFINE_HPP

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relml/error.hpp"
#include "relml/schema.hpp"

namespace relml {

/// target = offset + sum(coefficient * source column).
struct AffineIndexExpr {
  std::string target;
  std::vector<std::pair<std::string, std::int64_t>> terms;
  std::int64_t offset = 0;
  // When set, the output column has exactly this domain and every mapped
  // index must fall inside it. Otherwise the domain is the image of the
  // source box.
  std::optional<Column> domain;

  /// Keeps column `name` as is.
  static AffineIndexExpr copy(const std::string& name) { return {name, {{name, 1}}, 0, {}}; }

  /// Keeps column `source` under a new name.
  static AffineIndexExpr rename(const std::string& source, const std::string& target) {
    return {target, {{source, 1}}, 0, {}};
  }

  /// Parses integer-affine text such as "(channel * 5 + r) * 5 + c".
  /// Division, modulo, and products of two columns raise NonAffineExpr.
  static AffineIndexExpr parse(const std::string& target, std::string_view text);

  /// Smallest and largest value over the box spanned by `schema`.
  std::pair<std::int64_t, std::int64_t> bounds(const IndexSchema& schema) const {
    std::int64_t lo = offset, hi = offset;
    for (const auto& [col, coef] : terms) {
      const Column& c = schema[schema.index_of(col)];
      const std::int64_t a = coef * c.lo, b = coef * c.hi();
      lo += std::min(a, b);
      hi += std::max(a, b);
    }
    return {lo, hi};
  }

  Column output_column(const IndexSchema& schema) const {
    if (domain) {
      Column c = *domain;
      c.name = target;
      return c;
    }
    auto [lo, hi] = bounds(schema);
    return Column{target, hi - lo + 1, lo};
  }

  std::string to_string() const {
    std::string s;
    for (const auto& [col, coef] : terms) {
      if (coef == 0) continue;
      if (!s.empty()) s += coef < 0 ? " - " : " + ";
      else if (coef < 0) s += "-";
      const std::int64_t mag = coef < 0 ? -coef : coef;
      if (mag != 1) s += std::to_string(mag) + "*";
      s += col;
    }
    if (offset != 0 || s.empty()) {
      if (s.empty()) s = std::to_string(offset);
      else s += (offset < 0 ? " - " : " + ") + std::to_string(offset < 0 ? -offset : offset);
    }
    return s;
  }
};

namespace detail {

// Linear form produced while parsing: constant + sum(coef * column).
struct LinearForm {
  std::int64_t constant = 0;
  // Columns in order of first appearance.
  std::vector<std::pair<std::string, std::int64_t>> coefs;

  std::int64_t& coef(const std::string& col) {
    for (auto& [name, c] : coefs) {
      if (name == col) return c;
    }
    return coefs.emplace_back(col, 0).second;
  }

  bool is_constant() const {
    for (const auto& [_, c] : coefs) {
      if (c != 0) return false;
    }
    return true;
  }
};

class AffineParser {
 public:
  explicit AffineParser(std::string_view text) : text_(text) {}

  LinearForm parse() {
    LinearForm f = expr();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return f;
  }

 private:
  LinearForm expr() {
    LinearForm acc = term();
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) return acc;
      const char op = text_[pos_];
      if (op != '+' && op != '-') return acc;
      ++pos_;
      LinearForm rhs = term();
      const std::int64_t sign = op == '+' ? 1 : -1;
      acc.constant += sign * rhs.constant;
      for (const auto& [col, c] : rhs.coefs) acc.coef(col) += sign * c;
    }
  }

  LinearForm term() {
    LinearForm acc = factor();
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) return acc;
      const char op = text_[pos_];
      if (op == '/' || op == '%') {
        throw Error(Errc::NonAffineExpr,
                    "'" + std::string(text_) + "' uses '" + op +
                        "'; many-to-one index maps belong to aggregate");
      }
      if (op != '*') return acc;
      ++pos_;
      LinearForm rhs = factor();
      if (!acc.is_constant() && !rhs.is_constant()) {
        throw Error(Errc::NonAffineExpr, "'" + std::string(text_) + "' multiplies two columns");
      }
      const LinearForm& scale = acc.is_constant() ? acc : rhs;
      LinearForm other = acc.is_constant() ? rhs : acc;
      other.constant *= scale.constant;
      for (auto& [_, c] : other.coefs) c *= scale.constant;
      acc = std::move(other);
    }
  }

  LinearForm factor() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char ch = text_[pos_];
    if (ch == '(') {
      ++pos_;
      LinearForm inner = expr();
      skip_space();
      if (pos_ >= text_.size() || text_[pos_] != ')') fail("missing ')'");
      ++pos_;
      return inner;
    }
    if (ch == '-') {
      ++pos_;
      LinearForm f = factor();
      f.constant = -f.constant;
      for (auto& [_, c] : f.coefs) c = -c;
      return f;
    }
    if (std::isdigit(static_cast<unsigned char>(ch))) {
      std::int64_t v = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        v = v * 10 + (text_[pos_++] - '0');
      }
      return LinearForm{v, {}};
    }
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      LinearForm f;
      f.coef(std::string(text_.substr(start, pos_ - start))) = 1;
      return f;
    }
    fail("unexpected '" + std::string(1, ch) + "'");
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(Errc::ParseError, "in '" + std::string(text_) + "': " + why);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline AffineIndexExpr AffineIndexExpr::parse(const std::string& target, std::string_view text) {
  detail::LinearForm f = detail::AffineParser(text).parse();
  AffineIndexExpr e{target, {}, f.constant, {}};
  for (const auto& [col, c] : f.coefs) {
    if (c != 0) e.terms.emplace_back(col, c);
  }
  return e;
}

}  // namespace relml

#endif  // RELML_AFFINE_HPP
