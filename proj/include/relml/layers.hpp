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

#ifndef RELML_LAYERS_HPP
#define RELML_LAYERS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "relml/model_spec.hpp"
#include "relml/plan.hpp"

namespace relml {

// Every compile_* function appends a sub-plan reading node `input` and
// returns the id of the layer's output node.

namespace detail {

[[noreturn]] inline void shape_error(const LayerSpec& l, const std::string& why) {
  throw Error(Errc::ShapeChainError, "layer '" + l.name + "' (" + layer_kind_name(l.kind) +
                                         "): " + why);
}

inline void expect_image_schema(const LayerSpec& l, const IndexSchema& s) {
  if (s.rank() != 4 || s[0].name != "image" || s[1].name != "channel" || s[2].name != "r" ||
      s[3].name != "c") {
    shape_error(l, "expects (image, channel, r, c), got " + s.to_string());
  }
}

inline void expect_matrix_schema(const LayerSpec& l, const IndexSchema& s, std::int64_t cols) {
  if (s.rank() != 2) shape_error(l, "expects a rank-2 input, got " + s.to_string());
  if (s[1].domain_size != cols) {
    shape_error(l, "expects " + std::to_string(cols) + " input features, got " + s.to_string());
  }
}

inline std::size_t input_or_add(Plan& plan, const std::string& name, const IndexSchema& schema) {
  if (auto id = plan.find(name)) {
    if (!(plan.node(*id).sig.schema == schema)) {
      throw Error(Errc::ShapeChainError, "input '" + name + "' must have schema " +
                                             schema.to_string());
    }
    return *id;
  }
  return plan.add_input(name, Signature{schema, 0.0});
}

}  // namespace detail

inline std::size_t compile_conv2d(Plan& plan, const LayerSpec& l, std::size_t input) {
  const IndexSchema& s = plan.node(input).sig.schema;
  detail::expect_image_schema(l, s);
  const std::int64_t k = l.kernel, h = s[2].domain_size, w = s[3].domain_size;
  if (s[1].domain_size != l.in_channels) {
    detail::shape_error(l, "expects " + std::to_string(l.in_channels) + " channels, got " +
                               std::to_string(s[1].domain_size));
  }
  if (k < 1 || k > h || k > w) detail::shape_error(l, "kernel does not fit the input");
  const auto weight = plan.add_param(
      l.weight,
      IndexSchema::of({{"out_channel", l.out_channels}, {"in_channel", l.in_channels}, {"r", k}, {"c", k}}),
      "weight", ParamInit::Uniform, l.in_channels * k * k);
  const auto bias = plan.add_param(l.bias, IndexSchema::of({{"out_channel", l.out_channels}}),
                                   "bias", ParamInit::Zero, 0);
  const auto join = plan.add(l.name + "_join",
                             JoinOp{{{"channel", "in_channel"}},
                                    {{Side::A, "image", "image"},
                                     {Side::B, "out_channel", "channel"},
                                     {Side::A, "r", "r"},
                                     {Side::A, "c", "c"},
                                     {Side::B, "r", "kr"},
                                     {Side::B, "c", "kc"}}},
                             {input, weight});
  const auto shift = plan.add(l.name + "_shift",
                              ReindexOp{{AffineIndexExpr::copy("image"),
                                         AffineIndexExpr::copy("channel"),
                                         AffineIndexExpr::parse("r", "r - kr"),
                                         AffineIndexExpr::parse("c", "c - kc"),
                                         AffineIndexExpr::copy("kr"), AffineIndexExpr::copy("kc")}},
                              {join});
  const auto rows = plan.add(l.name + "_rows", FilterOp{"r", 0, h - k}, {shift});
  const auto cols = plan.add(l.name + "_cols", FilterOp{"c", 0, w - k}, {rows});
  const auto unbiased = plan.add(
      l.name + "_unbiased", AggregateOp{{"image", "channel", "r", "c"}, {}, AggKind::SUM}, {cols},
      true);
  const auto dense = plan.add(l.name + "_dense", DensifyOp{}, {unbiased});
  return plan.add(l.name + "_out", AddOp{{{"channel", "out_channel"}}}, {dense, bias}, true);
}

inline std::size_t compile_relu(Plan& plan, const LayerSpec& l, std::size_t input) {
  return plan.add(l.name + "_out", MapOp{ScalarFn::relu()}, {input}, true);
}

inline std::size_t compile_maxpool2x2(Plan& plan, const LayerSpec& l, std::size_t input) {
  const IndexSchema& s = plan.node(input).sig.schema;
  detail::expect_image_schema(l, s);
  if (s[2].domain_size % 2 != 0 || s[3].domain_size % 2 != 0) {
    throw Error(Errc::OddExtent, "layer '" + l.name + "': spatial extents " +
                                     std::to_string(s[2].domain_size) + "x" +
                                     std::to_string(s[3].domain_size) + " are not even");
  }
  return plan.add(l.name + "_out",
                  AggregateOp{{"image", "channel", "r", "c"}, {{"r", 2}, {"c", 2}}, AggKind::MAX},
                  {input}, true);
}

inline std::size_t compile_flatten(Plan& plan, const LayerSpec& l, std::size_t input) {
  const IndexSchema& s = plan.node(input).sig.schema;
  detail::expect_image_schema(l, s);
  const std::int64_t rows = s[2].domain_size, cols = s[3].domain_size;
  AffineIndexExpr i{"i", {{"channel", rows * cols}, {"r", cols}, {"c", 1}}, 0, {}};
  return plan.add(l.name + "_out", ReindexOp{{AffineIndexExpr::copy("image"), i}}, {input}, true);
}

inline std::size_t compile_fully_connected(Plan& plan, const LayerSpec& l, std::size_t input) {
  const IndexSchema& s = plan.node(input).sig.schema;
  detail::expect_matrix_schema(l, s, l.in_dim);
  const std::string sample = s[0].name, feature = s[1].name;
  const auto weight = plan.add_param(
      l.weight, IndexSchema::of({{"out_dim", l.out_dim}, {"in_dim", l.in_dim}}), "weight",
      ParamInit::Uniform, l.in_dim);
  const auto bias = plan.add_param(l.bias, IndexSchema::of({{"out_dim", l.out_dim}}), "bias",
                                   ParamInit::Zero, 0);
  const auto join = plan.add(
      l.name + "_join",
      JoinOp{{{feature, "in_dim"}}, {{Side::A, sample, sample}, {Side::B, "out_dim", feature}}},
      {input, weight});
  const auto unbiased = plan.add(l.name + "_unbiased",
                                 AggregateOp{{sample, feature}, {}, AggKind::SUM}, {join}, true);
  const auto dense = plan.add(l.name + "_dense", DensifyOp{}, {unbiased});
  return plan.add(l.name + "_out", AddOp{{{feature, "out_dim"}}}, {dense, bias}, true);
}

inline std::size_t compile_graph_conv(Plan& plan, const LayerSpec& l, std::size_t input) {
  const IndexSchema& s = plan.node(input).sig.schema;
  detail::expect_matrix_schema(l, s, l.in_dim);
  const std::string sample = s[0].name, feature = s[1].name;
  const std::int64_t n = s[0].domain_size;
  const auto adj = detail::input_or_add(plan, l.adjacency, IndexSchema::of({{"i", n}, {"j", n}}));
  const auto weight = plan.add_param(l.weight, IndexSchema::of({{"i", l.in_dim}, {"j", l.out_dim}}),
                                     "weight", ParamInit::Uniform, l.in_dim);
  const auto bias = plan.add_param(l.bias, IndexSchema::of({{"i", l.out_dim}}), "bias",
                                   ParamInit::Zero, 0);
  const auto join = plan.add(
      l.name + "_join",
      JoinOp{{{feature, "i"}}, {{Side::A, sample, sample}, {Side::B, "j", feature}}},
      {input, weight});
  const auto mid = plan.add(l.name + "_mid", AggregateOp{{sample, feature}, {}, AggKind::SUM},
                            {join}, true);
  const auto prop = plan.add(
      l.name + "_prop",
      JoinOp{{{"j", sample}}, {{Side::A, "i", sample}, {Side::B, feature, feature}}}, {adj, mid});
  const auto unbiased = plan.add(l.name + "_unbiased",
                                 AggregateOp{{sample, feature}, {}, AggKind::SUM}, {prop}, true);
  const auto dense = plan.add(l.name + "_dense", DensifyOp{}, {unbiased});
  return plan.add(l.name + "_out", AddOp{{{feature, "i"}}}, {dense, bias}, true);
}

/// loss(x, l) = -x_l + log sum_j exp(x_j), averaged over samples (or summed
/// against `loss_weights` when the layer names one).
inline std::size_t compile_cross_entropy(Plan& plan, const LayerSpec& l, std::size_t logits) {
  const IndexSchema& s = plan.node(logits).sig.schema;
  if (s.rank() != 2) detail::shape_error(l, "expects (sample, class) logits, got " + s.to_string());
  if (l.class_count != 0 && s[1].domain_size != l.class_count) {
    detail::shape_error(l, "expects " + std::to_string(l.class_count) + " classes, got " +
                               std::to_string(s[1].domain_size));
  }
  const std::string sample = s[0].name, cls = s[1].name;
  const std::int64_t n = s[0].domain_size;
  const auto labels =
      detail::input_or_add(plan, l.labels, IndexSchema::of({{sample, n}, {"label", s[1].domain_size}}));
  const std::string p = l.name;
  const auto ex = plan.add(p + "_exp", MapOp{ScalarFn::exp()}, {logits});
  const auto sum = plan.add(p + "_sumexp", AggregateOp{{sample}, {}, AggKind::SUM}, {ex});
  const auto right = plan.add(p + "_losses_r", MapOp{ScalarFn::log()}, {sum}, true);
  const auto pick = plan.add(
      p + "_pick", JoinOp{{{sample, sample}, {cls, "label"}}, {{Side::A, sample, sample}}},
      {logits, labels});
  const auto picked = plan.add(p + "_picked", AggregateOp{{sample}, {}, AggKind::SUM}, {pick});
  const auto left = plan.add(p + "_losses_l", MapOp{ScalarFn::negate()}, {picked}, true);
  const auto right_dense = plan.add(p + "_losses_r_dense", DensifyOp{}, {right});
  const auto losses =
      plan.add(p + "_losses", AddOp{{{sample, sample}}}, {right_dense, left}, true);
  if (l.loss_weights.empty()) {
    return plan.add(p + "_loss", AggregateOp{{}, {}, AggKind::AVG}, {losses}, true);
  }
  const auto weights = detail::input_or_add(plan, l.loss_weights, IndexSchema::of({{sample, n}}));
  const auto weighted =
      plan.add(p + "_weighted", JoinOp{{{sample, sample}}, {}}, {losses, weights});
  return plan.add(p + "_loss", AggregateOp{{}, {}, AggKind::SUM}, {weighted}, true);
}

/// Per sample, the smallest class index attaining the maximal logit, with
/// absent classes reading as the default. Returned as a relation of schema
/// (sample) whose value is the class.
inline TensorRelation argmax_predict(const TensorRelation& input) {
  const IndexSchema& s = input.schema();
  if (s.rank() != 2) throw Error(Errc::SchemaMismatch, "argmax_predict expects (sample, class)");
  // Repeated coordinates add up; this also puts entries in row-major order.
  const TensorRelation logits = input.layout() == Layout::Multiset
                                    ? aggregate(input, s.names(), AggKind::SUM)
                                    : input;
  const std::int64_t n = s[0].domain_size, k = s[1].domain_size;
  std::vector<double> row(static_cast<std::size_t>(k));
  IndexSchema out_schema({s[0]});
  RelationBuilder out(out_schema, 0.0);
  std::size_t e = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    std::fill(row.begin(), row.end(), logits.default_value());
    for (; e < logits.size() && logits.index(e)[0] - s[0].lo == i; ++e) {
      row[static_cast<std::size_t>(logits.index(e)[1] - s[1].lo)] = logits.value(e);
    }
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < k; ++j) {
      if (row[static_cast<std::size_t>(j)] > row[static_cast<std::size_t>(best)]) best = j;
    }
    const std::int64_t idx[1] = {i + s[0].lo};
    out.push(idx, static_cast<double>(best + s[1].lo));
  }
  return std::move(out).canonical();
}

inline std::vector<std::int64_t> predictions_vector(const TensorRelation& predicted) {
  const Column& c = predicted.schema()[0];
  std::vector<std::int64_t> v(static_cast<std::size_t>(c.domain_size),
                              static_cast<std::int64_t>(predicted.default_value()));
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    v[static_cast<std::size_t>(predicted.index(k)[0] - c.lo)] =
        static_cast<std::int64_t>(predicted.value(k));
  }
  return v;
}

/// Class per sample from a one-hot label relation (-1 when unlabeled).
inline std::vector<std::int64_t> labels_vector(const TensorRelation& onehot) {
  const Column& c = onehot.schema()[0];
  std::vector<std::int64_t> v(static_cast<std::size_t>(c.domain_size), -1);
  for (std::size_t k = 0; k < onehot.size(); ++k) {
    if (onehot.value(k) != 0.0) {
      v[static_cast<std::size_t>(onehot.index(k)[0] - c.lo)] = onehot.index(k)[1];
    }
  }
  return v;
}

/// Fraction of samples (optionally only those with nonzero mask) whose
/// prediction equals the label.
inline double accuracy(const TensorRelation& logits, const TensorRelation& labels,
                       const TensorRelation* mask = nullptr) {
  const auto pred = predictions_vector(argmax_predict(logits));
  const auto truth = labels_vector(labels);
  std::int64_t hit = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask) {
      const std::int64_t idx[1] = {static_cast<std::int64_t>(i)};
      if (mask->at(idx) == 0.0) continue;
    }
    ++total;
    if (pred[i] == truth[i]) ++hit;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

/// Row-normalized adjacency: optional unit diagonal, then each nonzero row
/// divided by its sum. Rows summing to zero stay empty.
inline TensorRelation normalize_adjacency(const TensorRelation& edges, bool add_self_loops = true) {
  const IndexSchema& s = edges.schema();
  if (s.rank() != 2 || s[0].domain_size != s[1].domain_size || s[0].lo != s[1].lo) {
    throw Error(Errc::NotSquare, "adjacency schema " + s.to_string());
  }
  edges.require_unique("normalize_adjacency");
  if (edges.default_value() != 0.0) throw Error(Errc::NotBinary, "adjacency default must be 0");
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (edges.value(k) != 1.0) {
      throw Error(Errc::NotBinary, "adjacency entry " + std::to_string(edges.value(k)));
    }
  }
  const std::int64_t n = s[0].domain_size, lo = s[0].lo;
  std::vector<std::vector<std::int64_t>> rows(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < edges.size(); ++k) {
    rows[static_cast<std::size_t>(edges.index(k)[0] - lo)].push_back(edges.index(k)[1]);
  }
  IndexSchema out_schema({Column{"i", n, lo}, Column{"j", n, lo}});
  RelationBuilder out(out_schema, 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    auto& cols = rows[static_cast<std::size_t>(i)];
    if (add_self_loops && std::find(cols.begin(), cols.end(), i + lo) == cols.end()) {
      cols.insert(std::lower_bound(cols.begin(), cols.end(), i + lo), i + lo);
    }
    if (cols.empty()) continue;
    const double v = 1.0 / static_cast<double>(cols.size());
    for (auto j : cols) {
      const std::int64_t idx[2] = {i + lo, j};
      out.push(idx, v);
    }
  }
  return std::move(out).canonical();
}

/// A compiled model: the plan plus the nodes the training loop reads.
struct Model {
  ModelSpec spec;
  Plan plan;
  std::size_t logits = Plan::npos;
  std::size_t loss = Plan::npos;
  std::string labels;        // label relation name, if the model has a loss
  std::string loss_weights;  // weighting relation name, if any

  bool has_loss() const { return loss != Plan::npos; }
};

inline Model build_model(const ModelSpec& spec) {
  Model m;
  m.spec = spec;
  if (spec.inputs.empty()) throw Error(Errc::ShapeChainError, "model declares no inputs");
  std::vector<std::size_t> inputs;
  for (const auto& in : spec.inputs) {
    inputs.push_back(m.plan.add_input(in.name, Signature{IndexSchema(in.schema), 0.0}));
  }
  std::size_t cur = inputs[0];
  for (const auto& l : spec.layers) {
    if (m.has_loss()) detail::shape_error(l, "follows the loss");
    switch (l.kind) {
      case LayerKind::conv2d: cur = compile_conv2d(m.plan, l, cur); break;
      case LayerKind::relu: cur = compile_relu(m.plan, l, cur); break;
      case LayerKind::maxpool2x2: cur = compile_maxpool2x2(m.plan, l, cur); break;
      case LayerKind::flatten: cur = compile_flatten(m.plan, l, cur); break;
      case LayerKind::fully_connected: cur = compile_fully_connected(m.plan, l, cur); break;
      case LayerKind::graph_conv: cur = compile_graph_conv(m.plan, l, cur); break;
      case LayerKind::cross_entropy_loss: {
        LayerSpec x = l;
        if (x.class_count == 0) x.class_count = spec.class_count;
        m.logits = cur;
        m.loss = cur = compile_cross_entropy(m.plan, x, cur);
        m.labels = x.labels;
        m.loss_weights = x.loss_weights;
        break;
      }
      case LayerKind::argmax_predict:
        if (m.plan.node(cur).sig.schema.rank() != 2) {
          detail::shape_error(l, "expects (sample, class) logits");
        }
        m.logits = cur;
        break;
    }
  }
  if (cur == inputs[0]) {
    const IndexSchema& s = m.plan.node(cur).sig.schema;
    std::vector<AffineIndexExpr> copy;
    for (const auto& c : s.columns()) copy.push_back(AffineIndexExpr::copy(c.name));
    cur = m.plan.add("identity_out", ReindexOp{copy}, {cur}, true);
  }
  if (m.logits == Plan::npos && m.plan.node(cur).sig.schema.rank() == 2) m.logits = cur;
  m.plan.set_output(cur);
  return m;
}

}  // namespace relml

#endif  // RELML_LAYERS_HPP
