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

// The relational primitives every layer is compiled from. Each primitive is
// an op struct (its static parameters) with two entry points:
//
//   infer(op, inputs...)  output schema and default from input signatures
//   apply(op, inputs...)  the relation itself
//
// All of them implement dense semantics: the result, read with its default,
// equals the dense computation over the inputs read with their defaults.

#ifndef RELML_PRIMITIVES_HPP
#define RELML_PRIMITIVES_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "relml/affine.hpp"
#include "relml/error.hpp"
#include "relml/relation.hpp"
#include "relml/scalar_fn.hpp"
#include "relml/schema.hpp"

namespace relml {

/// Static type of a relation: what a plan knows before any data is bound.
struct Signature {
  IndexSchema schema;
  double default_value = 0.0;
};

inline Signature signature_of(const TensorRelation& rel) {
  return {rel.schema(), rel.default_value()};
}

inline constexpr std::int64_t kDefaultDenseCap = 10'000'000;

// ---------------------------------------------------------------------------
// equi_join_product

enum class Side { A, B };

struct JoinOutput {
  Side side = Side::A;
  std::string column;
  std::string alias;
};

/// Rows of A x B agreeing on every equality, valued a * b. Output columns are
/// picked from either side. The result is a multiset unless the outputs
/// pin down every input column, in which case it is canonical.
struct JoinOp {
  std::vector<std::pair<std::string, std::string>> equalities;
  std::vector<JoinOutput> outputs;
};

namespace detail {

struct JoinPlan {
  std::vector<std::pair<std::size_t, std::size_t>> eq;  // (a position, b position)
  std::vector<std::pair<Side, std::size_t>> out;
  IndexSchema schema;
  bool unique = false;
};

inline JoinPlan plan_join(const JoinOp& op, const IndexSchema& a, const IndexSchema& b) {
  JoinPlan p;
  for (const auto& [ca, cb] : op.equalities) {
    const std::size_t ia = a.index_of(ca), ib = b.index_of(cb);
    if (a[ia].domain_size != b[ib].domain_size || a[ia].lo != b[ib].lo) {
      throw Error(Errc::SchemaMismatch,
                  "equated columns '" + ca + "' and '" + cb + "' have different domains");
    }
    p.eq.emplace_back(ia, ib);
  }
  std::vector<Column> cols;
  std::vector<bool> det_a(a.rank(), false), det_b(b.rank(), false);
  for (const auto& o : op.outputs) {
    const IndexSchema& s = o.side == Side::A ? a : b;
    const std::size_t k = s.index_of(o.column);
    Column c = s[k];
    c.name = o.alias.empty() ? o.column : o.alias;
    cols.push_back(std::move(c));
    p.out.emplace_back(o.side, k);
    (o.side == Side::A ? det_a : det_b)[k] = true;
  }
  p.schema = IndexSchema(std::move(cols));
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& [ia, ib] : p.eq) {
      if (det_a[ia] != det_b[ib]) {
        det_a[ia] = det_b[ib] = true;
        changed = true;
      }
    }
  }
  p.unique = std::all_of(det_a.begin(), det_a.end(), [](bool v) { return v; }) &&
             std::all_of(det_b.begin(), det_b.end(), [](bool v) { return v; });
  return p;
}

}  // namespace detail

inline Signature infer(const JoinOp& op, const Signature& a, const Signature& b) {
  auto p = detail::plan_join(op, a.schema, b.schema);
  if (a.default_value != 0.0 && b.default_value != 0.0) {
    throw Error(Errc::NonzeroDefaults, "join needs at least one zero default");
  }
  return {std::move(p.schema), 0.0};
}

inline TensorRelation apply(const JoinOp& op, const TensorRelation& a, const TensorRelation& b) {
  const auto p = detail::plan_join(op, a.schema(), b.schema());
  if (a.default_value() != 0.0 && b.default_value() != 0.0) {
    throw Error(Errc::NonzeroDefaults, "join needs at least one zero default (got " +
                                           std::to_string(a.default_value()) + " and " +
                                           std::to_string(b.default_value()) + ")");
  }
  // The zero-default side drives the iteration; its absent coordinates
  // contribute nothing. The other side is either hashed (zero default) or
  // enumerated over its dense domain (non-zero default).
  const bool outer_is_a = a.default_value() == 0.0;
  const TensorRelation& outer = outer_is_a ? a : b;
  const TensorRelation& inner = outer_is_a ? b : a;
  if (inner.default_value() != 0.0) inner.require_unique("join with non-zero default");

  std::vector<std::pair<std::size_t, std::size_t>> eq;  // (outer pos, inner pos)
  for (const auto& [ia, ib] : p.eq) eq.emplace_back(outer_is_a ? ia : ib, outer_is_a ? ib : ia);

  const IndexSchema& is = inner.schema();
  std::vector<Column> eq_cols;
  for (std::size_t k = 0; k < eq.size(); ++k) {
    Column c = is[eq[k].second];
    c.name = "k" + std::to_string(k);
    eq_cols.push_back(std::move(c));
  }
  const IndexSchema eq_schema(eq_cols);
  std::vector<std::int64_t> scratch(eq.size());

  RelationBuilder out(p.schema, 0.0);
  std::vector<std::int64_t> row(p.schema.rank());
  auto emit = [&](std::span<const std::int64_t> oi, std::span<const std::int64_t> ii, double v) {
    if (v == 0.0) return;
    for (std::size_t k = 0; k < p.out.size(); ++k) {
      const auto [side, pos] = p.out[k];
      const bool from_outer = (side == Side::A) == outer_is_a;
      row[k] = from_outer ? oi[pos] : ii[pos];
    }
    out.push_unchecked(row, p.schema.linear_key(row), v);
  };

  if (inner.default_value() == 0.0) {
    std::vector<std::pair<std::int64_t, std::size_t>> index;
    index.reserve(inner.size());
    for (std::size_t k = 0; k < inner.size(); ++k) {
      auto idx = inner.index(k);
      for (std::size_t e = 0; e < eq.size(); ++e) scratch[e] = idx[eq[e].second];
      index.emplace_back(eq_schema.linear_key(scratch), k);
    }
    std::stable_sort(index.begin(), index.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    for (std::size_t k = 0; k < outer.size(); ++k) {
      auto oi = outer.index(k);
      for (std::size_t e = 0; e < eq.size(); ++e) scratch[e] = oi[eq[e].first];
      const std::int64_t key = eq_schema.linear_key(scratch);
      auto it = std::lower_bound(index.begin(), index.end(), key,
                                 [](const auto& x, std::int64_t v) { return x.first < v; });
      for (; it != index.end() && it->first == key; ++it) {
        auto ii = inner.index(it->second);
        bool ok = true;
        for (const auto& [po, pi] : eq) ok = ok && oi[po] == ii[pi];
        if (ok) emit(oi, ii, outer.value(k) * inner.value(it->second));
      }
    }
  } else {
    // Enumerate the inner coordinates compatible with each outer entry.
    std::vector<bool> fixed(is.rank(), false);
    for (const auto& [po, pi] : eq) fixed[pi] = true;
    std::vector<Column> free_cols;
    std::vector<std::size_t> free_pos;
    for (std::size_t k = 0; k < is.rank(); ++k) {
      if (!fixed[k]) {
        free_cols.push_back(is[k]);
        free_pos.push_back(k);
      }
    }
    const IndexSchema free_schema(free_cols);
    std::vector<std::int64_t> ii(is.rank());
    for (std::size_t k = 0; k < outer.size(); ++k) {
      auto oi = outer.index(k);
      // An inner column equated to two outer columns needs them to agree.
      for (const auto& [po, pi] : eq) ii[pi] = oi[po];
      bool ok = true;
      for (const auto& [po, pi] : eq) ok = ok && ii[pi] == oi[po];
      if (!ok) continue;
      const double ov = outer.value(k);
      for_each_coordinate(free_schema, [&](std::span<const std::int64_t> f) {
        for (std::size_t j = 0; j < free_pos.size(); ++j) ii[free_pos[j]] = f[j];
        emit(oi, ii, ov * inner.at(ii));
      });
    }
  }
  if (!p.unique) return std::move(out).multiset();
  try {
    return std::move(out).canonical();
  } catch (const Error& e) {
    if (e.code() == Errc::DuplicateIndex) return std::move(out).multiset();
    throw;
  }
}

// ---------------------------------------------------------------------------
// reindex

/// Rewrites index columns through integer-affine expressions. The column
/// list is ordered; plain copies are expressed with AffineIndexExpr::copy.
struct ReindexOp {
  std::vector<AffineIndexExpr> columns;

  /// Keeps `keep` columns in place; an expression whose target names an
  /// input column takes that column's position, the rest are appended.
  static ReindexOp from(const IndexSchema& input, const std::vector<AffineIndexExpr>& exprs,
                        const std::vector<std::string>& keep) {
    ReindexOp op;
    std::vector<bool> used(exprs.size(), false);
    for (const auto& c : input.columns()) {
      if (std::find(keep.begin(), keep.end(), c.name) != keep.end()) {
        op.columns.push_back(AffineIndexExpr::copy(c.name));
        continue;
      }
      for (std::size_t k = 0; k < exprs.size(); ++k) {
        if (!used[k] && exprs[k].target == c.name) {
          op.columns.push_back(exprs[k]);
          used[k] = true;
          break;
        }
      }
    }
    for (std::size_t k = 0; k < exprs.size(); ++k) {
      if (!used[k]) op.columns.push_back(exprs[k]);
    }
    for (const auto& k : keep) input.index_of(k);
    return op;
  }
};

inline Signature infer(const ReindexOp& op, const Signature& in) {
  std::vector<Column> cols;
  for (const auto& e : op.columns) {
    for (const auto& [col, _] : e.terms) in.schema.index_of(col);
    cols.push_back(e.output_column(in.schema));
  }
  return {IndexSchema(std::move(cols)), in.default_value};
}

inline TensorRelation apply(const ReindexOp& op, const TensorRelation& rel) {
  Signature sig = infer(op, signature_of(rel));
  const IndexSchema& is = rel.schema();
  std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> terms;
  for (const auto& e : op.columns) {
    auto& t = terms.emplace_back();
    for (const auto& [col, coef] : e.terms) t.emplace_back(is.index_of(col), coef);
  }
  RelationBuilder out(sig.schema, sig.default_value);
  out.reserve(rel.size());
  std::vector<std::int64_t> row(op.columns.size());
  std::vector<std::pair<std::int64_t, std::int64_t>> mapping;  // (output key, source key)
  mapping.reserve(rel.size());
  for (std::size_t k = 0; k < rel.size(); ++k) {
    auto idx = rel.index(k);
    for (std::size_t c = 0; c < op.columns.size(); ++c) {
      std::int64_t v = op.columns[c].offset;
      for (const auto& [pos, coef] : terms[c]) v += coef * idx[pos];
      row[c] = v;
    }
    if (!sig.schema.contains(row)) {
      throw Error(Errc::OutOfDomain, "reindexed coordinate outside " + sig.schema.to_string());
    }
    const std::int64_t key = sig.schema.linear_key(row);
    mapping.emplace_back(key, rel.key(k));
    out.push_unchecked(row, key, rel.value(k));
  }
  std::sort(mapping.begin(), mapping.end());
  for (std::size_t k = 1; k < mapping.size(); ++k) {
    if (mapping[k].first != mapping[k - 1].first) continue;
    // Multisets legitimately repeat a source coordinate; distinct sources
    // meeting at one output coordinate are a collision.
    if (rel.has_unique_coords() || mapping[k].second != mapping[k - 1].second) {
      throw Error(Errc::Collision, "two entries map to the same coordinate in " +
                                       sig.schema.to_string());
    }
  }
  if (rel.layout() == Layout::Multiset) return std::move(out).multiset();
  return std::move(out).canonical();
}

// ---------------------------------------------------------------------------
// filter_range

/// Keeps entries whose `column` lies in [lo, hi] (inclusive, like BETWEEN).
/// The surviving domain is re-based to start at 0.
struct FilterOp {
  std::string column;
  std::int64_t lo = 0;
  std::int64_t hi = 0;

  /// Effective kept interval, clipped to the column's current domain.
  std::pair<std::int64_t, std::int64_t> kept(const Column& c) const {
    if (lo > hi) {
      throw Error(Errc::EmptyRange, "[" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    const std::int64_t l = std::max(lo, c.lo), h = std::min(hi, c.hi());
    if (l > h) {
      throw Error(Errc::EmptyRange, "[" + std::to_string(lo) + ", " + std::to_string(hi) +
                                        "] misses the domain of '" + c.name + "'");
    }
    return {l, h};
  }
};

inline Signature infer(const FilterOp& op, const Signature& in) {
  const std::size_t pos = in.schema.index_of(op.column);
  auto cols = in.schema.columns();
  auto [l, h] = op.kept(cols[pos]);
  cols[pos] = Column{op.column, h - l + 1, 0};
  return {IndexSchema(std::move(cols)), in.default_value};
}

inline TensorRelation apply(const FilterOp& op, const TensorRelation& rel) {
  Signature sig = infer(op, signature_of(rel));
  const std::size_t pos = rel.schema().index_of(op.column);
  auto [l, h] = op.kept(rel.schema()[pos]);
  RelationBuilder out(sig.schema, sig.default_value);
  std::vector<std::int64_t> row(rel.rank());
  for (std::size_t k = 0; k < rel.size(); ++k) {
    auto idx = rel.index(k);
    if (idx[pos] < l || idx[pos] > h) continue;
    std::copy(idx.begin(), idx.end(), row.begin());
    row[pos] -= l;
    out.push_unchecked(row, sig.schema.linear_key(row), rel.value(k));
  }
  if (rel.layout() == Layout::Multiset) return std::move(out).multiset();
  return std::move(out).canonical();
}

// ---------------------------------------------------------------------------
// aggregate

enum class AggKind { SUM, MAX, AVG, COUNT };

inline std::string agg_name(AggKind k) {
  switch (k) {
    case AggKind::SUM: return "SUM";
    case AggKind::MAX: return "MAX";
    case AggKind::AVG: return "AVG";
    case AggKind::COUNT: return "COUNT";
  }
  return "?";
}

/// Floor-division collapse of a grouping column (pooling's r / 2).
struct Collapse {
  std::string column;
  std::int64_t divisor = 1;
};

/// GROUP BY over `group` (in output order); every other column is reduced.
/// Aggregates see the full dense group: absent coordinates count as the
/// default, so SUM adds default * (cardinality - stored) and COUNT is the
/// cardinality itself.
struct AggregateOp {
  std::vector<std::string> group;
  std::vector<Collapse> collapse;
  AggKind agg = AggKind::SUM;
};

namespace detail {

inline std::int64_t floor_div(std::int64_t x, std::int64_t d) {
  std::int64_t q = x / d;
  if ((x % d != 0) && ((x < 0) != (d < 0))) --q;
  return q;
}

struct AggregatePlan {
  IndexSchema schema;
  std::vector<std::size_t> group_pos;     // input position per output column
  std::vector<std::int64_t> divisor;      // per output column (1 = plain)
  std::int64_t reduced_size = 1;          // product of non-group domains
  std::int64_t max_cardinality = 1;
  bool uniform = true;                    // every group has max_cardinality

  // Number of input coordinates falling in one output group.
  std::int64_t cardinality(const IndexSchema& in, std::span<const std::int64_t> g) const {
    std::int64_t card = reduced_size;
    for (std::size_t k = 0; k < group_pos.size(); ++k) {
      if (divisor[k] == 1) continue;
      const Column& c = in[group_pos[k]];
      const std::int64_t lo = std::max(c.lo, g[k] * divisor[k]);
      const std::int64_t hi = std::min(c.hi(), g[k] * divisor[k] + divisor[k] - 1);
      card *= hi - lo + 1;
    }
    return card;
  }
};

inline AggregatePlan plan_aggregate(const AggregateOp& op, const IndexSchema& in) {
  AggregatePlan p;
  std::vector<bool> grouped(in.rank(), false);
  std::vector<Column> cols;
  for (const auto& name : op.group) {
    const std::size_t k = in.index_of(name);
    if (grouped[k]) throw Error(Errc::InvalidSchema, "column '" + name + "' grouped twice");
    grouped[k] = true;
    p.group_pos.push_back(k);
    p.divisor.push_back(1);
    cols.push_back(in[k]);
  }
  for (const auto& c : op.collapse) {
    if (c.divisor < 1) {
      throw Error(Errc::DivisorInvalid, "divisor " + std::to_string(c.divisor) + " for '" +
                                            c.column + "'");
    }
    auto it = std::find(op.group.begin(), op.group.end(), c.column);
    if (it == op.group.end()) {
      throw Error(Errc::InvalidSchema, "collapsed column '" + c.column + "' is not grouped");
    }
    const std::size_t k = static_cast<std::size_t>(it - op.group.begin());
    p.divisor[k] = c.divisor;
    const Column& src = in[p.group_pos[k]];
    const std::int64_t lo = floor_div(src.lo, c.divisor), hi = floor_div(src.hi(), c.divisor);
    cols[k] = Column{src.name, hi - lo + 1, lo};
    std::int64_t widest = 0, narrowest = c.divisor;
    for (std::int64_t q = lo; q <= hi; ++q) {
      const std::int64_t n =
          std::min(src.hi(), q * c.divisor + c.divisor - 1) - std::max(src.lo, q * c.divisor) + 1;
      widest = std::max(widest, n);
      narrowest = std::min(narrowest, n);
    }
    p.max_cardinality *= widest;
    p.uniform = p.uniform && widest == narrowest;
  }
  for (std::size_t k = 0; k < in.rank(); ++k) {
    if (!grouped[k]) p.reduced_size *= in[k].domain_size;
  }
  p.max_cardinality *= p.reduced_size;
  p.schema = IndexSchema(std::move(cols));
  return p;
}

inline double empty_group_value(AggKind agg, double d, std::int64_t card) {
  switch (agg) {
    case AggKind::SUM: return d * static_cast<double>(card);
    case AggKind::MAX: return d;
    case AggKind::AVG: return d;
    case AggKind::COUNT: return static_cast<double>(card);
  }
  return d;
}

}  // namespace detail

inline Signature infer(const AggregateOp& op, const Signature& in) {
  auto p = detail::plan_aggregate(op, in.schema);
  return {std::move(p.schema),
          detail::empty_group_value(op.agg, in.default_value, p.max_cardinality)};
}

inline TensorRelation apply(const AggregateOp& op, const TensorRelation& rel) {
  const auto p = detail::plan_aggregate(op, rel.schema());
  const double d = rel.default_value();
  const double result_default = detail::empty_group_value(op.agg, d, p.max_cardinality);
  if (rel.layout() == Layout::Multiset && (op.agg != AggKind::SUM || d != 0.0)) {
    throw Error(Errc::NonCanonical, agg_name(op.agg) + " over a multiset relation");
  }

  struct Row {
    std::int64_t group;
    std::int64_t source;
    double value;
  };
  std::vector<Row> rows;
  rows.reserve(rel.size());
  std::vector<std::int64_t> g(p.group_pos.size());
  for (std::size_t k = 0; k < rel.size(); ++k) {
    auto idx = rel.index(k);
    for (std::size_t c = 0; c < g.size(); ++c) {
      g[c] = detail::floor_div(idx[p.group_pos[c]], p.divisor[c]);
    }
    rows.push_back({p.schema.linear_key(g), rel.key(k), rel.value(k)});
  }
  // Fixed summation order: by group, then coordinate, then value.
  std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
    return std::tie(x.group, x.source, x.value) < std::tie(y.group, y.source, y.value);
  });

  RelationBuilder out(p.schema, result_default);
  std::vector<std::int64_t> present;
  for (std::size_t begin = 0; begin < rows.size();) {
    std::size_t end = begin;
    while (end < rows.size() && rows[end].group == rows[begin].group) ++end;
    p.schema.unravel(rows[begin].group, g);
    const std::int64_t card = p.cardinality(rel.schema(), g);
    const std::int64_t stored = static_cast<std::int64_t>(end - begin);
    double v = 0.0;
    switch (op.agg) {
      case AggKind::SUM:
      case AggKind::AVG: {
        for (std::size_t k = begin; k < end; ++k) v += rows[k].value;
        if (d != 0.0) v += d * static_cast<double>(card - stored);
        if (op.agg == AggKind::AVG) v /= static_cast<double>(card);
        break;
      }
      case AggKind::MAX: {
        v = rows[begin].value;
        for (std::size_t k = begin; k < end; ++k) v = std::max(v, rows[k].value);
        if (stored < card) v = std::max(v, d);
        break;
      }
      case AggKind::COUNT: v = static_cast<double>(card); break;
    }
    out.push_unchecked(g, rows[begin].group, v);
    present.push_back(rows[begin].group);
    begin = end;
  }

  const bool card_dependent =
      op.agg == AggKind::COUNT || (op.agg == AggKind::SUM && d != 0.0);
  if (!p.uniform && card_dependent) {
    // Edge groups are smaller; if any of them is empty its value cannot be
    // represented by the uniform default.
    std::size_t next = 0;
    for_each_coordinate(p.schema, [&](std::span<const std::int64_t> coord) {
      const std::int64_t key = p.schema.linear_key(coord);
      if (next < present.size() && present[next] == key) {
        ++next;
        return;
      }
      const double v = detail::empty_group_value(op.agg, d, p.cardinality(rel.schema(), coord));
      if (v != result_default) {
        throw Error(Errc::DefaultConflict,
                    "empty groups of " + p.schema.to_string() + " need different defaults");
      }
    });
  }
  return std::move(out).canonical();
}

// ---------------------------------------------------------------------------
// scalar_map

struct MapOp {
  ScalarFn fn;
};

inline Signature infer(const MapOp& op, const Signature& in) {
  return {in.schema, op.fn(in.default_value)};
}

inline TensorRelation apply(const MapOp& op, const TensorRelation& rel) {
  rel.require_unique("scalar_map");
  RelationBuilder out(rel.schema(), op.fn(rel.default_value()));
  out.reserve(rel.size());
  for (std::size_t k = 0; k < rel.size(); ++k) {
    out.push_unchecked(rel.index(k), rel.key(k), op.fn(rel.value(k)));
  }
  return std::move(out).canonical();
}

// ---------------------------------------------------------------------------
// densify

/// Stores every coordinate explicitly (default becomes 0 by convention).
/// The output is the one layout allowed to store default-valued entries.
struct DensifyOp {
  std::int64_t cap = kDefaultDenseCap;
};

inline Signature infer(const DensifyOp& op, const Signature& in) {
  if (in.schema.dense_size() > op.cap) {
    throw Error(Errc::TooLarge, in.schema.to_string() + " has " +
                                    std::to_string(in.schema.dense_size()) +
                                    " coordinates, cap is " + std::to_string(op.cap));
  }
  return {in.schema, 0.0};
}

inline TensorRelation apply(const DensifyOp& op, const TensorRelation& rel) {
  infer(op, signature_of(rel));
  rel.require_unique("densify");
  RelationBuilder out(rel.schema(), 0.0);
  out.reserve(static_cast<std::size_t>(rel.schema().dense_size()));
  std::size_t next = 0;
  std::int64_t key = 0;
  for_each_coordinate(rel.schema(), [&](std::span<const std::int64_t> idx) {
    double v = rel.default_value();
    if (next < rel.size() && rel.key(next) == key) v = rel.value(next++);
    out.push_unchecked(idx, key++, v);
  });
  return std::move(out).materialized();
}

// ---------------------------------------------------------------------------
// add_broadcast

/// Coordinate-wise a(x) + b(project(x)). Every column of b is equated to one
/// column of a, so b broadcasts over the remaining columns of a (bias
/// addition), or matches a exactly (gradient accumulation).
struct AddOp {
  std::vector<std::pair<std::string, std::string>> equalities;  // (a column, b column)

  static AddOp same_columns(const IndexSchema& s) {
    AddOp op;
    for (const auto& c : s.columns()) op.equalities.emplace_back(c.name, c.name);
    return op;
  }
};

namespace detail {

// For each b position, the a position equated to it.
inline std::vector<std::size_t> plan_add(const AddOp& op, const IndexSchema& a,
                                         const IndexSchema& b) {
  std::vector<std::size_t> proj(b.rank(), a.rank());
  std::vector<bool> a_used(a.rank(), false);
  for (const auto& [ca, cb] : op.equalities) {
    const std::size_t ia = a.index_of(ca), ib = b.index_of(cb);
    if (a[ia].domain_size != b[ib].domain_size || a[ia].lo != b[ib].lo) {
      throw Error(Errc::SchemaMismatch,
                  "added columns '" + ca + "' and '" + cb + "' have different domains");
    }
    if (proj[ib] != a.rank() || a_used[ia]) {
      throw Error(Errc::SchemaMismatch, "column equated twice in addition");
    }
    proj[ib] = ia;
    a_used[ia] = true;
  }
  for (std::size_t k = 0; k < b.rank(); ++k) {
    if (proj[k] == a.rank()) {
      throw Error(Errc::SchemaMismatch, "column '" + b[k].name + "' of the addend is unbound");
    }
  }
  return proj;
}

}  // namespace detail

inline Signature infer(const AddOp& op, const Signature& a, const Signature& b) {
  detail::plan_add(op, a.schema, b.schema);
  return {a.schema, a.default_value + b.default_value};
}

inline TensorRelation apply(const AddOp& op, const TensorRelation& a, const TensorRelation& b) {
  a.require_unique("add");
  b.require_unique("add");
  const auto proj = detail::plan_add(op, a.schema(), b.schema());
  const IndexSchema& as = a.schema();
  RelationBuilder out(as, a.default_value() + b.default_value());
  std::vector<std::int64_t> bi(b.rank());
  for (std::size_t k = 0; k < a.size(); ++k) {
    auto ai = a.index(k);
    for (std::size_t j = 0; j < proj.size(); ++j) bi[j] = ai[proj[j]];
    out.push_unchecked(ai, a.key(k), a.value(k) + b.at(bi));
  }
  if (static_cast<std::int64_t>(a.size()) < as.dense_size() && !b.empty()) {
    // Coordinates absent from a but lying under a stored entry of b.
    std::vector<bool> bound(as.rank(), false);
    for (auto pos : proj) bound[pos] = true;
    std::vector<Column> free_cols;
    std::vector<std::size_t> free_pos;
    for (std::size_t k = 0; k < as.rank(); ++k) {
      if (!bound[k]) {
        free_cols.push_back(as[k]);
        free_pos.push_back(k);
      }
    }
    const IndexSchema free_schema(free_cols);
    std::vector<std::int64_t> ai(as.rank());
    for (std::size_t k = 0; k < b.size(); ++k) {
      auto bidx = b.index(k);
      for (std::size_t j = 0; j < proj.size(); ++j) ai[proj[j]] = bidx[j];
      for_each_coordinate(free_schema, [&](std::span<const std::int64_t> f) {
        for (std::size_t j = 0; j < free_pos.size(); ++j) ai[free_pos[j]] = f[j];
        const std::int64_t key = as.linear_key(ai);
        if (!a.find_key(key)) out.push_unchecked(ai, key, a.default_value() + b.value(k));
      });
    }
  }
  return std::move(out).canonical();
}

// ---------------------------------------------------------------------------
// Named entry points.

inline TensorRelation equi_join_product(const TensorRelation& a, const TensorRelation& b,
                                        std::vector<std::pair<std::string, std::string>> eq,
                                        std::vector<JoinOutput> outputs) {
  return apply(JoinOp{std::move(eq), std::move(outputs)}, a, b);
}

inline TensorRelation reindex(const TensorRelation& rel, const std::vector<AffineIndexExpr>& exprs,
                              const std::vector<std::string>& keep = {}) {
  return apply(ReindexOp::from(rel.schema(), exprs, keep), rel);
}

inline TensorRelation filter_range(const TensorRelation& rel, const std::string& column,
                                   std::int64_t lo, std::int64_t hi) {
  return apply(FilterOp{column, lo, hi}, rel);
}

inline TensorRelation aggregate(const TensorRelation& rel, std::vector<std::string> group,
                                AggKind agg, std::vector<Collapse> collapse = {}) {
  return apply(AggregateOp{std::move(group), std::move(collapse), agg}, rel);
}

inline TensorRelation scalar_map(const TensorRelation& rel, ScalarFn fn) {
  return apply(MapOp{fn}, rel);
}

inline TensorRelation densify(const TensorRelation& rel, std::int64_t cap = kDefaultDenseCap) {
  return apply(DensifyOp{cap}, rel);
}

inline TensorRelation add_broadcast(const TensorRelation& a, const TensorRelation& b,
                                    std::vector<std::pair<std::string, std::string>> eq) {
  return apply(AddOp{std::move(eq)}, a, b);
}

/// a + b over identical schemas.
inline TensorRelation add(const TensorRelation& a, const TensorRelation& b) {
  if (!(a.schema() == b.schema())) {
    throw Error(Errc::SchemaMismatch, a.schema().to_string() + " vs " + b.schema().to_string());
  }
  return apply(AddOp::same_columns(a.schema()), a, b);
}

/// Join followed by SUM over every non-output column: generalized einsum.
inline TensorRelation contract(const TensorRelation& a, const TensorRelation& b,
                               std::vector<std::pair<std::string, std::string>> eq,
                               std::vector<JoinOutput> outputs) {
  std::vector<std::string> group;
  for (const auto& o : outputs) group.push_back(o.alias.empty() ? o.column : o.alias);
  auto joined = apply(JoinOp{std::move(eq), std::move(outputs)}, a, b);
  return apply(AggregateOp{std::move(group), {}, AggKind::SUM}, joined);
}

/// Entries whose `column` value is listed in `ids`, renumbered to the
/// position of that value in `ids`. Used to cut minibatches.
inline TensorRelation gather(const TensorRelation& rel, const std::string& column,
                             std::span<const std::int64_t> ids) {
  rel.require_unique("gather");
  const std::size_t pos = rel.schema().index_of(column);
  const Column& src = rel.schema()[pos];
  std::vector<std::int64_t> slot(static_cast<std::size_t>(src.domain_size), -1);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (!src.contains(ids[k])) throw Error(Errc::OutOfDomain, "gather id outside domain");
    auto& s = slot[static_cast<std::size_t>(ids[k] - src.lo)];
    if (s != -1) throw Error(Errc::DuplicateIndex, "gather ids repeat");
    s = static_cast<std::int64_t>(k);
  }
  auto cols = rel.schema().columns();
  cols[pos] = Column{column, static_cast<std::int64_t>(ids.size()), 0};
  IndexSchema schema(std::move(cols));
  RelationBuilder out(schema, rel.default_value());
  std::vector<std::int64_t> row(rel.rank());
  for (std::size_t k = 0; k < rel.size(); ++k) {
    auto idx = rel.index(k);
    const std::int64_t s = slot[static_cast<std::size_t>(idx[pos] - src.lo)];
    if (s < 0) continue;
    std::copy(idx.begin(), idx.end(), row.begin());
    row[pos] = s;
    out.push_unchecked(row, schema.linear_key(row), rel.value(k));
  }
  return std::move(out).canonical();
}

}  // namespace relml

#endif  // RELML_PRIMITIVES_HPP
