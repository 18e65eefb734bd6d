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

// Reverse-mode differentiation over plans. Every backward rule is itself a
// composition of the relational primitives, fed with the upstream gradient,
// forward values from the tape, and constant selection relations that encode
// index maps (x -> reindex(x), x -> group(x), group -> argmax).

#ifndef RELML_AUTODIFF_HPP
#define RELML_AUTODIFF_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "relml/plan.hpp"

namespace relml {

struct Tape {
  const Plan* plan = nullptr;
  std::vector<TensorRelation> values;  // one per plan node, in plan order

  const TensorRelation& output() const { return values[plan->output()]; }
  const TensorRelation& value(const std::string& name) const { return values[plan->at(name)]; }

  /// The scalar loss (the output of a rank-0 plan).
  double loss() const {
    const TensorRelation& out = output();
    if (out.rank() != 0) {
      throw Error(Errc::UnsupportedGradient, "plan output " + out.schema().to_string() +
                                                 " is not a scalar");
    }
    return out.at({});
  }
};

inline Tape forward_with_tape(const Plan& plan, const Bindings& bindings) {
  return Tape{&plan, evaluate_all(plan, bindings)};
}

struct GradientSet {
  std::map<std::string, TensorRelation> grads;
  // Primitive applied at each backward step, in execution order.
  std::vector<std::string> trace;

  const TensorRelation& at(const std::string& name) const {
    auto it = grads.find(name);
    if (it == grads.end()) throw Error(Errc::UnboundTarget, "no gradient for '" + name + "'");
    return it->second;
  }
};

namespace detail {

class Backward {
 public:
  Backward(const Tape& tape, std::vector<std::string>* trace) : tape_(tape), trace_(trace) {}

  template <typename Op, typename... Rel>
  TensorRelation run(const Op& op, const Rel&... rel) {
    trace_->push_back(op_name(NodeOp{op}));
    return apply(op, rel...);
  }

  // Contributions to the gradient of each input of node k, given its
  // upstream gradient g. Entries are empty when no gradient flows.
  std::vector<std::optional<TensorRelation>> vjp(std::size_t k, const TensorRelation& g,
                                                 const std::vector<bool>& needs) {
    const PlanNode& node = tape_.plan->node(k);
    std::vector<std::optional<TensorRelation>> out(node.inputs.size());
    auto want = [&](std::size_t slot) { return needs[node.inputs[slot]]; };
    auto in = [&](std::size_t slot) -> const TensorRelation& {
      return tape_.values[node.inputs[slot]];
    };

    if (const auto* op = std::get_if<JoinOp>(&node.op)) {
      if (want(0)) out[0] = join_vjp(g, *op, Side::A, in(0).schema(), in(1));
      if (want(1)) out[1] = join_vjp(g, *op, Side::B, in(1).schema(), in(0));
    } else if (const auto* op = std::get_if<ReindexOp>(&node.op)) {
      if (want(0)) out[0] = reindex_vjp(g, *op, in(0).schema(), node.sig.schema);
    } else if (const auto* op = std::get_if<FilterOp>(&node.op)) {
      if (want(0)) out[0] = filter_vjp(g, *op, in(0).schema());
    } else if (const auto* op = std::get_if<AggregateOp>(&node.op)) {
      if (want(0)) out[0] = aggregate_vjp(g, *op, in(0), tape_.values[k]);
    } else if (const auto* op = std::get_if<MapOp>(&node.op)) {
      if (want(0)) out[0] = map_vjp(g, *op, in(0), tape_.values[k]);
    } else if (std::holds_alternative<DensifyOp>(node.op)) {
      if (want(0)) out[0] = g;
    } else if (const auto* op = std::get_if<AddOp>(&node.op)) {
      if (want(0)) out[0] = g;
      if (want(1)) out[1] = add_vjp(g, *op, in(1).schema());
    }
    return out;
  }

 private:
  static std::vector<std::string> names(const IndexSchema& s) { return s.names(); }

  TensorRelation sum_to(const TensorRelation& rel, const IndexSchema& target) {
    return run(AggregateOp{names(target), {}, AggKind::SUM}, rel);
  }

  // d/d(target side) of out = target * other: join g with the other operand,
  // projecting onto the target's columns, then sum out everything else.
  TensorRelation join_vjp(const TensorRelation& g, const JoinOp& op, Side target,
                          const IndexSchema& ts, const TensorRelation& other) {
    const Side other_side = target == Side::A ? Side::B : Side::A;
    auto target_col = [&](const std::pair<std::string, std::string>& e) {
      return target == Side::A ? e.first : e.second;
    };
    auto other_col = [&](const std::pair<std::string, std::string>& e) {
      return target == Side::A ? e.second : e.first;
    };
    std::map<std::string, int> t_uses, o_uses;
    for (const auto& e : op.equalities) {
      ++t_uses[target_col(e)];
      ++o_uses[other_col(e)];
    }
    for (const auto& [col, n] : t_uses) {
      if (n > 1) throw Error(Errc::UnsupportedGradient, "column '" + col + "' equated twice");
    }
    for (const auto& [col, n] : o_uses) {
      if (n > 1) throw Error(Errc::UnsupportedGradient, "column '" + col + "' equated twice");
    }
    auto partner = [&](const std::string& tc) -> std::optional<std::string> {
      for (const auto& e : op.equalities) {
        if (target_col(e) == tc) return other_col(e);
      }
      return std::nullopt;
    };
    auto alias = [](const JoinOutput& o) { return o.alias.empty() ? o.column : o.alias; };

    JoinOp back;
    for (const auto& o : op.outputs) {
      if (o.side == other_side) {
        back.equalities.emplace_back(alias(o), o.column);
      } else if (auto p = partner(o.column)) {
        back.equalities.emplace_back(alias(o), *p);
      }
    }
    std::sort(back.equalities.begin(), back.equalities.end());
    back.equalities.erase(std::unique(back.equalities.begin(), back.equalities.end()),
                          back.equalities.end());
    for (const auto& c : ts.columns()) {
      const JoinOutput* direct = nullptr;
      for (const auto& o : op.outputs) {
        if (o.side == target && o.column == c.name) {
          direct = &o;
          break;
        }
      }
      if (direct) {
        back.outputs.push_back({Side::A, alias(*direct), c.name});
      } else if (auto p = partner(c.name)) {
        back.outputs.push_back({Side::B, *p, c.name});
      } else {
        throw Error(Errc::UnsupportedGradient,
                    "join column '" + c.name + "' is neither kept nor equated");
      }
    }
    return sum_to(run(back, g, other), ts);
  }

  // Pull g back through an injective affine map using a selection relation
  // over the mapped source columns: sel(x, ~y) = 1 where y = map(x).
  TensorRelation reindex_vjp(const TensorRelation& g, const ReindexOp& op, const IndexSchema& in,
                             const IndexSchema& out) {
    auto is_copy = [](const AffineIndexExpr& e) {
      return e.terms.size() == 1 && e.terms[0].second == 1 && e.offset == 0 && !e.domain;
    };
    std::vector<bool> is_source(in.rank(), false);
    std::vector<std::size_t> mapped;
    for (std::size_t k = 0; k < op.columns.size(); ++k) {
      if (is_copy(op.columns[k])) continue;
      mapped.push_back(k);
      for (const auto& [col, _] : op.columns[k].terms) is_source[in.index_of(col)] = true;
    }
    std::vector<Column> sel_cols;
    std::vector<std::size_t> src_pos;
    for (std::size_t k = 0; k < in.rank(); ++k) {
      if (is_source[k]) {
        sel_cols.push_back(in[k]);
        src_pos.push_back(k);
      }
    }
    for (auto k : mapped) {
      Column c = out[k];
      c.name = "~" + c.name;
      sel_cols.push_back(c);
    }
    const IndexSchema sel_schema(sel_cols);
    const IndexSchema src_schema(std::vector<Column>(sel_cols.begin(),
                                                     sel_cols.begin() + static_cast<std::ptrdiff_t>(src_pos.size())));
    RelationBuilder sel(sel_schema, 0.0);
    std::vector<std::int64_t> row(sel_schema.rank());
    for_each_coordinate(src_schema, [&](std::span<const std::int64_t> x) {
      std::copy(x.begin(), x.end(), row.begin());
      for (std::size_t m = 0; m < mapped.size(); ++m) {
        const auto& e = op.columns[mapped[m]];
        std::int64_t y = e.offset;
        for (const auto& [col, coef] : e.terms) {
          const std::size_t p = src_schema.index_of(col);
          y += coef * x[p];
        }
        if (!out[mapped[m]].contains(y)) return;
        row[src_pos.size() + m] = y;
      }
      sel.push(row, 1.0);
    });

    JoinOp back;
    for (auto k : mapped) back.equalities.emplace_back(out[k].name, "~" + out[k].name);
    for (std::size_t k = 0; k < op.columns.size(); ++k) {
      const auto& e = op.columns[k];
      if (is_copy(e) && is_source[in.index_of(e.terms[0].first)]) {
        back.equalities.emplace_back(e.target, e.terms[0].first);
      }
    }
    for (std::size_t p = 0; p < in.rank(); ++p) {
      if (is_source[p]) {
        back.outputs.push_back({Side::B, in[p].name, in[p].name});
        continue;
      }
      const AffineIndexExpr* copy = nullptr;
      for (const auto& e : op.columns) {
        if (is_copy(e) && e.terms[0].first == in[p].name) copy = &e;
      }
      if (!copy) {
        throw Error(Errc::UnsupportedGradient, "reindex drops column '" + in[p].name + "'");
      }
      back.outputs.push_back({Side::A, copy->target, in[p].name});
    }
    return sum_to(run(back, g, std::move(sel).canonical()), in);
  }

  // Shift the kept window back to its original offset; the rest is zero.
  TensorRelation filter_vjp(const TensorRelation& g, const FilterOp& op, const IndexSchema& in) {
    const std::size_t pos = in.index_of(op.column);
    const auto [lo, hi] = op.kept(in[pos]);
    ReindexOp back;
    for (std::size_t k = 0; k < in.rank(); ++k) {
      if (k == pos) {
        back.columns.push_back({in[k].name, {{in[k].name, 1}}, lo, in[k]});
      } else {
        back.columns.push_back(AffineIndexExpr::copy(in[k].name));
      }
    }
    return run(back, g);
  }

  TensorRelation aggregate_vjp(const TensorRelation& g, const AggregateOp& op,
                               const TensorRelation& x, const TensorRelation& y) {
    const IndexSchema& in = x.schema();
    const auto p = plan_aggregate(op, in);
    const IndexSchema& gs = y.schema();
    if (op.agg == AggKind::COUNT) return TensorRelation(in);

    // Which input columns are grouped, and with which divisor.
    std::vector<std::int64_t> div_of(in.rank(), 0);  // 0 = reduced
    std::vector<std::size_t> out_of(in.rank(), 0);
    for (std::size_t k = 0; k < p.group_pos.size(); ++k) {
      div_of[p.group_pos[k]] = p.divisor[k];
      out_of[p.group_pos[k]] = k;
    }

    // Selection columns: every input column not passed through from g, then
    // ~name for each collapsed group column.
    std::vector<Column> sel_cols;
    std::vector<std::size_t> sel_src;
    const bool route_max = op.agg == AggKind::MAX;
    for (std::size_t k = 0; k < in.rank(); ++k) {
      if (route_max || div_of[k] != 1) {
        sel_cols.push_back(in[k]);
        sel_src.push_back(k);
      }
    }
    std::vector<std::size_t> collapsed;
    for (std::size_t k = 0; k < in.rank(); ++k) {
      if (div_of[k] > 1) {
        Column c = gs[out_of[k]];
        c.name = "~" + c.name;
        sel_cols.push_back(c);
        collapsed.push_back(k);
      }
    }
    const IndexSchema sel_schema(sel_cols);
    RelationBuilder sel(sel_schema, 0.0);
    std::vector<std::int64_t> row(sel_schema.rank());
    std::vector<std::int64_t> group(gs.rank());

    auto group_of = [&](std::span<const std::int64_t> xi) {
      for (std::size_t k = 0; k < p.group_pos.size(); ++k) {
        group[k] = floor_div(xi[p.group_pos[k]], p.divisor[k]);
      }
    };

    if (route_max) {
      // Lexicographically smallest argmax of each dense group, absent
      // coordinates reading as the default.
      const std::int64_t ng = gs.dense_size();
      std::vector<double> best(static_cast<std::size_t>(ng),
                               -std::numeric_limits<double>::infinity());
      std::vector<std::int64_t> arg(static_cast<std::size_t>(ng), -1);
      std::size_t e = 0;
      for_each_coordinate(in, [&](std::span<const std::int64_t> xi) {
        const std::int64_t key = in.linear_key(xi);
        double v = x.default_value();
        if (e < x.size() && x.key(e) == key) v = x.value(e++);
        group_of(xi);
        const auto gk = static_cast<std::size_t>(gs.linear_key(group));
        if (v > best[gk]) {
          best[gk] = v;
          arg[gk] = key;
        }
      });
      std::vector<std::int64_t> xi(in.rank());
      for (std::int64_t gk = 0; gk < ng; ++gk) {
        const std::int64_t key = arg[static_cast<std::size_t>(gk)];
        if (key < 0) continue;
        in.unravel(key, xi);
        group_of(xi);
        for (std::size_t k = 0; k < sel_src.size(); ++k) row[k] = xi[sel_src[k]];
        for (std::size_t m = 0; m < collapsed.size(); ++m) {
          row[sel_src.size() + m] = group[out_of[collapsed[m]]];
        }
        sel.push(row, 1.0);
      }
    } else {
      // SUM: weight 1; AVG: weight 1 / |group|.
      const IndexSchema src_schema(std::vector<Column>(
          sel_cols.begin(), sel_cols.begin() + static_cast<std::ptrdiff_t>(sel_src.size())));
      std::vector<std::int64_t> xi(in.rank(), 0);
      for_each_coordinate(src_schema, [&](std::span<const std::int64_t> s) {
        for (std::size_t k = 0; k < sel_src.size(); ++k) xi[sel_src[k]] = s[k];
        std::copy(s.begin(), s.end(), row.begin());
        for (std::size_t m = 0; m < collapsed.size(); ++m) {
          const std::size_t k = collapsed[m];
          row[sel_src.size() + m] = floor_div(xi[k], div_of[k]);
          group[out_of[k]] = row[sel_src.size() + m];
        }
        double w = 1.0;
        if (op.agg == AggKind::AVG) w = 1.0 / static_cast<double>(p.cardinality(in, group));
        sel.push(row, w);
      });
    }

    JoinOp back;
    for (std::size_t k = 0; k < in.rank(); ++k) {
      if (div_of[k] == 1 && route_max) back.equalities.emplace_back(in[k].name, in[k].name);
    }
    for (auto k : collapsed) {
      back.equalities.emplace_back(gs[out_of[k]].name, "~" + gs[out_of[k]].name);
    }
    for (std::size_t k = 0; k < in.rank(); ++k) {
      if (route_max || div_of[k] != 1) {
        back.outputs.push_back({Side::B, in[k].name, in[k].name});
      } else {
        back.outputs.push_back({Side::A, gs[out_of[k]].name, in[k].name});
      }
    }
    return sum_to(run(back, g, std::move(sel).canonical()), in);
  }

  TensorRelation map_vjp(const TensorRelation& g, const MapOp& op, const TensorRelation& x,
                         const TensorRelation& y) {
    auto times = [&](const TensorRelation& d) {
      JoinOp j;
      for (const auto& c : g.schema().columns()) {
        j.equalities.emplace_back(c.name, c.name);
        j.outputs.push_back({Side::A, c.name, c.name});
      }
      return run(j, g, d);
    };
    switch (op.fn.kind) {
      case ScalarKind::relu: return times(run(MapOp{ScalarFn::step()}, x));
      case ScalarKind::exp: return times(y);
      case ScalarKind::log: return times(run(MapOp{ScalarFn::reciprocal()}, x));
      case ScalarKind::negate: return run(MapOp{ScalarFn::negate()}, g);
      case ScalarKind::mul_const: return run(MapOp{ScalarFn::mul_const(op.fn.constant)}, g);
      case ScalarKind::add_const: return g;
      case ScalarKind::step: return TensorRelation(x.schema());
      case ScalarKind::reciprocal: break;
    }
    throw Error(Errc::UnsupportedGradient, "no derivative for " + op.fn.name());
  }

  // The addend broadcasts over a's free columns, so its gradient sums them out.
  TensorRelation add_vjp(const TensorRelation& g, const AddOp& op, const IndexSchema& b) {
    std::vector<std::string> group(b.rank());
    for (const auto& [ca, cb] : op.equalities) group[b.index_of(cb)] = ca;
    if (group == b.names() && g.schema() == b) return g;
    auto summed = run(AggregateOp{group, {}, AggKind::SUM}, g);
    if (summed.schema() == b) return summed;
    ReindexOp rename;
    for (std::size_t k = 0; k < b.rank(); ++k) {
      rename.columns.push_back(AffineIndexExpr::rename(group[k], b[k].name));
    }
    return run(rename, summed);
  }

  const Tape& tape_;
  std::vector<std::string>* trace_;
};

}  // namespace detail

/// Gradients of the scalar plan output with respect to the named inputs
/// (every parameter when `wrt` is empty).
inline GradientSet backward(const Tape& tape, const std::vector<std::string>& wrt = {}) {
  const Plan& plan = *tape.plan;
  (void)tape.loss();
  std::vector<std::string> targets = wrt;
  if (targets.empty()) {
    for (auto id : plan.inputs_with_role(InputRole::Param)) targets.push_back(plan.node(id).name);
  }
  std::vector<bool> needs(plan.size(), false);
  for (const auto& name : targets) {
    auto id = plan.find(name);
    if (!id || !std::holds_alternative<InputOp>(plan.node(*id).op)) {
      throw Error(Errc::UnboundTarget, "'" + name + "' is not a plan input");
    }
    needs[*id] = true;
  }
  for (std::size_t k = 0; k < plan.size(); ++k) {
    for (auto in : plan.node(k).inputs) needs[k] = needs[k] || needs[in];
  }

  GradientSet result;
  detail::Backward bw(tape, &result.trace);
  std::vector<std::optional<TensorRelation>> grad(plan.size());
  grad[plan.output()] = TensorRelation::scalar(1.0);
  for (std::size_t k = plan.size(); k-- > 0;) {
    if (!grad[k] || !needs[k]) continue;
    const PlanNode& node = plan.node(k);
    if (std::holds_alternative<InputOp>(node.op)) continue;
    auto parts = bw.vjp(k, *grad[k], needs);
    for (std::size_t s = 0; s < parts.size(); ++s) {
      if (!parts[s]) continue;
      const std::size_t in = node.inputs[s];
      if (!(parts[s]->schema() == plan.node(in).sig.schema)) {
        throw Error(Errc::SchemaMismatch, "gradient for '" + plan.node(in).name + "' has schema " +
                                              parts[s]->schema().to_string());
      }
      if (grad[in]) {
        grad[in] = bw.run(AddOp::same_columns(grad[in]->schema()), *grad[in], *parts[s]);
      } else {
        grad[in] = std::move(*parts[s]);
      }
    }
    if (k != plan.output()) grad[k].reset();
  }
  for (const auto& name : targets) {
    const std::size_t id = plan.at(name);
    TensorRelation g = grad[id] ? std::move(*grad[id]) : TensorRelation(plan.node(id).sig.schema);
    for (std::size_t e = 0; e < g.size(); ++e) {
      if (!std::isfinite(g.value(e))) {
        throw Error(Errc::DomainError, "non-finite gradient for '" + name + "'");
      }
    }
    result.grads.emplace(name, std::move(g));
  }
  return result;
}

}  // namespace relml

#endif  // RELML_AUTODIFF_HPP
