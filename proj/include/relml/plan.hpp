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

#ifndef RELML_PLAN_HPP
#define RELML_PLAN_HPP

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "relml/error.hpp"
#include "relml/primitives.hpp"

namespace relml {

enum class InputRole { Data, Param };

enum class ParamInit { None, Uniform, Zero };

/// A leaf: a relation bound by name at evaluation time.
struct InputOp {
  InputRole role = InputRole::Data;
  std::string value_column = "val";
  ParamInit init = ParamInit::None;
  std::int64_t fan_in = 0;
};

using NodeOp = std::variant<InputOp, JoinOp, ReindexOp, FilterOp, AggregateOp, MapOp, DensifyOp,
                            AddOp>;

inline std::string op_name(const NodeOp& op) {
  struct {
    std::string operator()(const InputOp&) const { return "input"; }
    std::string operator()(const JoinOp&) const { return "equi_join_product"; }
    std::string operator()(const ReindexOp&) const { return "reindex"; }
    std::string operator()(const FilterOp&) const { return "filter_range"; }
    std::string operator()(const AggregateOp&) const { return "aggregate"; }
    std::string operator()(const MapOp&) const { return "scalar_map"; }
    std::string operator()(const DensifyOp&) const { return "densify"; }
    std::string operator()(const AddOp&) const { return "add_broadcast"; }
  } v;
  return std::visit(v, op);
}

struct PlanNode {
  std::string name;
  NodeOp op;
  std::vector<std::size_t> inputs;
  Signature sig;
  // Hint for the SQL emitter: give this node its own table.
  bool materialize = false;
};

/// DAG of primitive applications. Nodes are appended in topological order,
/// and every node's signature is inferred as it is added, so a plan that
/// builds is well typed.
class Plan {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t add_input(const std::string& name, Signature sig, InputOp op = {}) {
    return push(PlanNode{name, std::move(op), {}, std::move(sig), true});
  }

  std::size_t add_param(const std::string& name, const IndexSchema& schema,
                        const std::string& value_column, ParamInit init, std::int64_t fan_in) {
    return add_input(name, Signature{schema, 0.0},
                     InputOp{InputRole::Param, value_column, init, fan_in});
  }

  std::size_t add(const std::string& name, NodeOp op, std::vector<std::size_t> inputs,
                  bool materialize = false) {
    for (auto in : inputs) {
      if (in >= nodes_.size()) throw Error(Errc::InvalidSchema, "node '" + name + "' input");
    }
    Signature sig = std::visit(
        [&](const auto& o) -> Signature {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, InputOp>) {
            throw Error(Errc::InvalidSchema, "inputs are added with add_input");
          } else if constexpr (std::is_same_v<T, JoinOp> || std::is_same_v<T, AddOp>) {
            expect_arity(name, inputs, 2);
            return infer(o, nodes_[inputs[0]].sig, nodes_[inputs[1]].sig);
          } else {
            expect_arity(name, inputs, 1);
            return infer(o, nodes_[inputs[0]].sig);
          }
        },
        op);
    return push(PlanNode{name, std::move(op), std::move(inputs), std::move(sig), materialize});
  }

  void set_output(std::size_t id) { output_ = id; }
  std::size_t output() const { return output_ == npos ? nodes_.size() - 1 : output_; }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const PlanNode& node(std::size_t id) const { return nodes_.at(id); }
  PlanNode& node(std::size_t id) { return nodes_.at(id); }
  const std::vector<PlanNode>& nodes() const { return nodes_; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t at(const std::string& name) const {
    auto id = find(name);
    if (!id) throw Error(Errc::UnboundTarget, "no node named '" + name + "'");
    return *id;
  }

  std::vector<std::size_t> inputs_with_role(InputRole role) const {
    std::vector<std::size_t> ids;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const auto* in = std::get_if<InputOp>(&nodes_[k].op);
      if (in && in->role == role) ids.push_back(k);
    }
    return ids;
  }

  /// Number of nodes reading each node.
  std::vector<std::size_t> consumer_counts() const {
    std::vector<std::size_t> n(nodes_.size(), 0);
    for (const auto& node : nodes_) {
      for (auto in : node.inputs) ++n[in];
    }
    if (!nodes_.empty()) ++n[output()];
    return n;
  }

 private:
  std::size_t push(PlanNode node) {
    if (by_name_.count(node.name)) {
      throw Error(Errc::InvalidSchema, "duplicate node name '" + node.name + "'");
    }
    by_name_[node.name] = nodes_.size();
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
  }

  static void expect_arity(const std::string& name, const std::vector<std::size_t>& inputs,
                           std::size_t n) {
    if (inputs.size() != n) {
      throw Error(Errc::InvalidSchema, "node '" + name + "' takes " + std::to_string(n) +
                                           " inputs, got " + std::to_string(inputs.size()));
    }
  }

  std::vector<PlanNode> nodes_;
  std::map<std::string, std::size_t> by_name_;
  std::size_t output_ = npos;
};

using Bindings = std::map<std::string, TensorRelation>;

inline TensorRelation apply_node(const PlanNode& node, const std::vector<TensorRelation>& values) {
  return std::visit(
      [&](const auto& o) -> TensorRelation {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, InputOp>) {
          throw Error(Errc::InvalidSchema, "input node '" + node.name + "' is not applied");
        } else if constexpr (std::is_same_v<T, JoinOp> || std::is_same_v<T, AddOp>) {
          return apply(o, values[node.inputs[0]], values[node.inputs[1]]);
        } else {
          return apply(o, values[node.inputs[0]]);
        }
      },
      node.op);
}

/// Checks that `rel` may be bound to input `node`.
inline void check_binding(const PlanNode& node, const TensorRelation& rel) {
  if (!(rel.schema() == node.sig.schema)) {
    throw Error(Errc::SchemaMismatch, "input '" + node.name + "' expects " +
                                          node.sig.schema.to_string() + ", got " +
                                          rel.schema().to_string());
  }
  if (rel.default_value() != node.sig.default_value) {
    throw Error(Errc::SchemaMismatch, "input '" + node.name + "' expects default " +
                                          std::to_string(node.sig.default_value));
  }
}

/// Evaluates every node in order and returns all values.
inline std::vector<TensorRelation> evaluate_all(const Plan& plan, const Bindings& bindings) {
  std::vector<TensorRelation> values(plan.size());
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const PlanNode& node = plan.node(k);
    if (std::holds_alternative<InputOp>(node.op)) {
      auto it = bindings.find(node.name);
      if (it == bindings.end()) {
        throw Error(Errc::UnboundInput, "input '" + node.name + "' is not bound");
      }
      check_binding(node, it->second);
      values[k] = it->second;
    } else {
      values[k] = apply_node(node, values);
    }
  }
  return values;
}

inline TensorRelation evaluate(const Plan& plan, const Bindings& bindings) {
  return std::move(evaluate_all(plan, bindings)[plan.output()]);
}

}  // namespace relml

#endif  // RELML_PLAN_HPP
