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

// Brute-force dense reference. Everything here is explicit loops over
// row-major arrays; nothing calls into the relational engine except the two
// conversion functions at the bottom.

#ifndef RELML_ORACLE_DENSE_HPP
#define RELML_ORACLE_DENSE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "relml/error.hpp"
#include "relml/relation.hpp"

namespace relml::oracle {

inline constexpr std::int64_t kDenseCap = 10'000'000;

struct DenseTensor {
  std::vector<std::int64_t> shape;
  std::vector<double> values;

  DenseTensor() = default;
  explicit DenseTensor(std::vector<std::int64_t> s, double fill = 0.0) : shape(std::move(s)) {
    std::int64_t n = 1;
    for (auto e : shape) {
      if (e < 1 || n > kDenseCap / e) throw Error(Errc::TooLarge, "dense tensor too large");
      n *= e;
    }
    values.assign(static_cast<std::size_t>(n), fill);
  }

  std::size_t size() const { return values.size(); }

  std::size_t offset(std::initializer_list<std::int64_t> idx) const {
    std::size_t off = 0, k = 0;
    for (auto i : idx) off = off * static_cast<std::size_t>(shape[k++]) + static_cast<std::size_t>(i);
    return off;
  }
  double& operator()(std::initializer_list<std::int64_t> idx) { return values[offset(idx)]; }
  double operator()(std::initializer_list<std::int64_t> idx) const { return values[offset(idx)]; }
};

// ---------------------------------------------------------------------------
// Layers. Shapes: images (N, C, H, W); matrices (rows, cols).

inline DenseTensor conv2d(const DenseTensor& x, const DenseTensor& w, const DenseTensor& b) {
  const auto n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const auto cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  if (w.shape[1] != cin || b.shape[0] != cout || kh > h || kw > wd) {
    throw Error(Errc::SchemaMismatch, "conv2d shapes");
  }
  DenseTensor y({n, cout, h - kh + 1, wd - kw + 1});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t o = 0; o < cout; ++o)
      for (std::int64_t r = 0; r < h - kh + 1; ++r)
        for (std::int64_t c = 0; c < wd - kw + 1; ++c) {
          double s = 0.0;
          for (std::int64_t ci = 0; ci < cin; ++ci)
            for (std::int64_t dr = 0; dr < kh; ++dr)
              for (std::int64_t dc = 0; dc < kw; ++dc)
                s += x({i, ci, r + dr, c + dc}) * w({o, ci, dr, dc});
          y({i, o, r, c}) = s + b({o});
        }
  return y;
}

inline DenseTensor relu(const DenseTensor& x) {
  DenseTensor y = x;
  for (auto& v : y.values) v = v > 0.0 ? v : 0.0;
  return y;
}

inline DenseTensor maxpool2x2(const DenseTensor& x) {
  const auto n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  if (h % 2 != 0 || w % 2 != 0) throw Error(Errc::OddExtent, "maxpool2x2 needs even extents");
  DenseTensor y({n, c, h / 2, w / 2});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t r = 0; r < h / 2; ++r)
        for (std::int64_t cc = 0; cc < w / 2; ++cc) {
          double m = -std::numeric_limits<double>::infinity();
          for (std::int64_t dr = 0; dr < 2; ++dr)
            for (std::int64_t dc = 0; dc < 2; ++dc) m = std::max(m, x({i, ch, 2 * r + dr, 2 * cc + dc}));
          y({i, ch, r, cc}) = m;
        }
  return y;
}

inline DenseTensor flatten(const DenseTensor& x) {
  const auto n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  DenseTensor y({n, c * h * w});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t cc = 0; cc < w; ++cc) y({i, (ch * h + r) * w + cc}) = x({i, ch, r, cc});
  return y;
}

/// y[n, o] = sum_i w[o, i] x[n, i] + b[o]
inline DenseTensor fully_connected(const DenseTensor& x, const DenseTensor& w, const DenseTensor& b) {
  const auto n = x.shape[0], in = x.shape[1], out = w.shape[0];
  if (w.shape[1] != in || b.shape[0] != out) throw Error(Errc::SchemaMismatch, "fc shapes");
  DenseTensor y({n, out});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t o = 0; o < out; ++o) {
      double s = 0.0;
      for (std::int64_t k = 0; k < in; ++k) s += w({o, k}) * x({i, k});
      y({i, o}) = s + b({o});
    }
  return y;
}

inline DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  const auto n = a.shape[0], m = a.shape[1], p = b.shape[1];
  if (b.shape[0] != m) throw Error(Errc::SchemaMismatch, "matmul shapes");
  DenseTensor y({n, p});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::int64_t k = 0; k < m; ++k) s += a({i, k}) * b({k, j});
      y({i, j}) = s;
    }
  return y;
}

/// Y = A (X W) + B, bias broadcast over rows.
inline DenseTensor graph_conv(const DenseTensor& adj, const DenseTensor& x, const DenseTensor& w,
                              const DenseTensor& b) {
  DenseTensor y = matmul(adj, matmul(x, w));
  for (std::int64_t i = 0; i < y.shape[0]; ++i)
    for (std::int64_t j = 0; j < y.shape[1]; ++j) y({i, j}) += b({j});
  return y;
}

/// Mean (or weighted sum, when weights are given) of -x_l + log sum_j exp(x_j).
inline double cross_entropy(const DenseTensor& logits, const std::vector<std::int64_t>& labels,
                            const std::vector<double>* weights = nullptr) {
  const auto n = logits.shape[0], k = logits.shape[1];
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double se = 0.0;
    for (std::int64_t j = 0; j < k; ++j) se += std::exp(logits({i, j}));
    const double loss = -logits({i, labels[static_cast<std::size_t>(i)]}) + std::log(se);
    total += weights ? (*weights)[static_cast<std::size_t>(i)] * loss : loss;
  }
  return weights ? total : total / static_cast<double>(n);
}

/// Per-row argmax, smallest index on ties.
inline std::vector<std::int64_t> argmax_rows(const DenseTensor& logits) {
  std::vector<std::int64_t> out;
  for (std::int64_t i = 0; i < logits.shape[0]; ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < logits.shape[1]; ++j) {
      if (logits({i, j}) > logits({i, best})) best = j;
    }
    out.push_back(best);
  }
  return out;
}

inline DenseTensor row_normalize(const DenseTensor& adj, bool self_loops) {
  DenseTensor a = adj;
  const auto n = a.shape[0];
  if (self_loops)
    for (std::int64_t i = 0; i < n; ++i) a({i, i}) = 1.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < n; ++j) s += a({i, j});
    if (s == 0.0) continue;
    for (std::int64_t j = 0; j < n; ++j) a({i, j}) /= s;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Finite differences.

/// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h for every coordinate.
inline DenseTensor finite_diff_grad(const std::function<double(const DenseTensor&)>& f,
                                    const DenseTensor& point, double h) {
  if (!(h > 0.0)) throw Error(Errc::InvalidParams, "step must be positive");
  DenseTensor g(point.shape);
  DenseTensor x = point;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x.values[k];
    x.values[k] = orig + h;
    const double fp = f(x);
    x.values[k] = orig - h;
    const double fm = f(x);
    x.values[k] = orig;
    const double d = (fp - fm) / (2.0 * h);
    if (!std::isfinite(d)) throw Error(Errc::DomainError, "non-finite finite difference");
    g.values[k] = d;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Conversion.

/// Dense array over the relation's domain; absent coordinates read as default.
inline DenseTensor to_dense(const TensorRelation& rel) {
  std::vector<std::int64_t> shape;
  for (const auto& c : rel.schema().columns()) shape.push_back(c.domain_size);
  DenseTensor t(shape, rel.default_value());
  if (rel.layout() == Layout::Multiset) {
    // Raw join rows: coordinates repeat and add up.
    for (auto& v : t.values) v = 0.0;
    for (std::size_t k = 0; k < rel.size(); ++k) t.values[static_cast<std::size_t>(rel.key(k))] += rel.value(k);
    return t;
  }
  for (std::size_t k = 0; k < rel.size(); ++k) t.values[static_cast<std::size_t>(rel.key(k))] = rel.value(k);
  return t;
}

/// Canonical relation (default 0) holding the nonzero values of a dense array.
inline TensorRelation from_dense(const DenseTensor& t, const std::vector<std::string>& names,
                                 double default_value = 0.0) {
  if (names.size() != t.shape.size()) throw Error(Errc::SchemaMismatch, "names vs shape rank");
  std::vector<Column> cols;
  for (std::size_t k = 0; k < names.size(); ++k) cols.push_back(Column{names[k], t.shape[k], 0});
  IndexSchema schema(std::move(cols));
  RelationBuilder b(schema, default_value);
  std::vector<std::int64_t> idx(schema.rank());
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t.values[k] == default_value) continue;
    schema.unravel(static_cast<std::int64_t>(k), idx);
    b.push_unchecked(idx, static_cast<std::int64_t>(k), t.values[k]);
  }
  return std::move(b).canonical();
}

/// max |a - b| and whether every coordinate satisfies |a - b| <= max(rel*|b|, abs).
struct Comparison {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool pass = true;
};

inline Comparison compare(const DenseTensor& actual, const DenseTensor& expected, double rel,
                          double abs_floor) {
  Comparison c;
  if (actual.shape != expected.shape) {
    c.pass = false;
    c.max_abs_err = std::numeric_limits<double>::infinity();
    return c;
  }
  for (std::size_t k = 0; k < actual.size(); ++k) {
    const double e = std::abs(actual.values[k] - expected.values[k]);
    const double scale = std::abs(expected.values[k]);
    c.max_abs_err = std::max(c.max_abs_err, e);
    if (scale > 0.0) c.max_rel_err = std::max(c.max_rel_err, e / scale);
    if (!(e <= std::max(rel * scale, abs_floor))) c.pass = false;
  }
  return c;
}

}  // namespace relml::oracle

#endif  // RELML_ORACLE_DENSE_HPP
