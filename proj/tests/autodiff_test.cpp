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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "relml/autodiff.hpp"
#include "relml/dataset.hpp"
#include "relml/gradcheck.hpp"
#include "relml/verify.hpp"
#include "support/random_relations.hpp"

namespace relml {
namespace {

using oracle::DenseTensor;
using oracle::to_dense;

TensorRelation vec(std::vector<double> v) {
  DenseTensor t({static_cast<std::int64_t>(v.size())});
  t.values = std::move(v);
  return oracle::from_dense(t, {"k"});
}

// loss = SUM(relu(x)), gradient taken for the data input x.
TEST(BackwardTest, ReluSubgradientIsZeroAtAndBelowZero) {
  Plan plan;
  const auto x = plan.add_input("x", Signature{IndexSchema::of({{"k", 3}}), 0.0});
  const auto r = plan.add("r", MapOp{ScalarFn::relu()}, {x});
  plan.add("loss", AggregateOp{{}, {}, AggKind::SUM}, {r});
  const Tape tape = forward_with_tape(plan, {{"x", vec({-1.0, 2.0, 0.0})}});
  const auto g = backward(tape, {"x"});
  EXPECT_EQ(to_dense(g.at("x")).values, (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(BackwardTest, UnknownTargetAndNonScalarOutput) {
  Plan plan;
  const auto x = plan.add_input("x", Signature{IndexSchema::of({{"k", 3}}), 0.0});
  plan.add("r", MapOp{ScalarFn::relu()}, {x});
  const Tape tape = forward_with_tape(plan, {{"x", vec({1.0, 2.0, 3.0})}});
  EXPECT_THROW(backward(tape, {"x"}), Error);

  Plan p2;
  const auto y = p2.add_input("y", Signature{IndexSchema::of({{"k", 3}}), 0.0});
  p2.add("loss", AggregateOp{{}, {}, AggKind::SUM}, {y});
  const Tape t2 = forward_with_tape(p2, {{"y", vec({1.0, 2.0, 3.0})}});
  try {
    backward(t2, {"nope"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnboundTarget);
  }
}

TEST(BackwardTest, ContractionGradientIsTheOtherOperand) {
  // loss = sum_i a_i b_i, so dloss/da = b.
  Plan plan;
  const auto s = IndexSchema::of({{"k", 4}});
  const auto a = plan.add_input("a", Signature{s, 0.0});
  const auto b = plan.add_input("b", Signature{s, 0.0});
  const auto j = plan.add("j", JoinOp{{{"k", "k"}}, {}}, {a, b});
  plan.add("loss", AggregateOp{{}, {}, AggKind::SUM}, {j});
  const auto bv = vec({0.5, 0.0, -2.0, 3.0});
  const Tape tape = forward_with_tape(plan, {{"a", vec({1.0, 2.0, 0.0, 0.0})}, {"b", bv}});
  const auto g = backward(tape, {"a", "b"});
  EXPECT_EQ(to_dense(g.at("a")).values, to_dense(bv).values);
  EXPECT_EQ(to_dense(g.at("b")).values, (std::vector<double>{1.0, 2.0, 0.0, 0.0}));
}

TEST(BackwardTest, MaxRoutesToSmallestArgmaxAndIgnoresOthers) {
  Plan plan;
  const auto x = plan.add_input("x", Signature{IndexSchema::of({{"k", 4}}), 0.0});
  const auto m = plan.add("m", AggregateOp{{}, {}, AggKind::MAX}, {x});
  (void)m;
  auto grad = [&](std::vector<double> v) {
    return to_dense(backward(forward_with_tape(plan, {{"x", vec(std::move(v))}}), {"x"}).at("x")).values;
  };
  EXPECT_EQ(grad({1.0, 3.0, 3.0, 2.0}), (std::vector<double>{0.0, 1.0, 0.0, 0.0}));
  EXPECT_EQ(grad({1.0, 3.0, 2.9, 2.0}), grad({1.2, 3.0, 2.7, 1.5}));
  // The implicit zero wins: no stored entry gets gradient.
  EXPECT_EQ(grad({-1.0, -3.0, 0.0, -2.0}), (std::vector<double>{0.0, 0.0, 1.0, 0.0}));
}

TEST(BackwardProperty, MaxRoutingIsStableUnderSmallPerturbations) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Plan plan;
  const auto x = plan.add_input("x", Signature{IndexSchema::of({{"k", 6}}), 0.0});
  const auto mx = plan.add("m", AggregateOp{{}, {}, AggKind::MAX}, {x});
  const auto e = plan.add("e", MapOp{ScalarFn::exp()}, {mx});
  (void)e;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(6);
    for (auto& y : v) y = u(rng);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const double top = sorted.back();
    const double gap = top - std::max(sorted[4], 0.0);
    if (gap <= 0.0) continue;
    const auto g0 = to_dense(backward(forward_with_tape(plan, {{"x", vec(v)}}), {"x"}).at("x")).values;
    for (auto& y : v) {
      if (y != top) y += (u(rng) > 0 ? 1 : -1) * 0.4 * gap;
    }
    const auto g1 = to_dense(backward(forward_with_tape(plan, {{"x", vec(v)}}), {"x"}).at("x")).values;
    EXPECT_EQ(g0, g1);
  }
}

TEST(BackwardTest, QuadraticThroughSelfJoin) {
  // f(p) = p^2 - 6p + 9, f'(p) = 2p - 6.
  Plan plan;
  const auto s = IndexSchema::of({{"x", 1}});
  const auto p = plan.add_param("p", s, "val", ParamInit::Uniform, 1);
  const auto sq = plan.add("sq", JoinOp{{{"x", "x"}}, {}}, {p, p});
  const auto sqs = plan.add("sq_sum", AggregateOp{{}, {}, AggKind::SUM}, {sq});
  const auto lin = plan.add("lin", AggregateOp{{}, {}, AggKind::SUM}, {p});
  const auto lin6 = plan.add("lin6", MapOp{ScalarFn::mul_const(-6.0)}, {lin});
  const auto sum = plan.add("sum", AddOp{}, {sqs, lin6});
  plan.add("f", MapOp{ScalarFn::add_const(9.0)}, {sum});
  for (double v : {-1.0, 0.5, 3.0, 7.25}) {
    const Tape tape = forward_with_tape(plan, {{"p", oracle::from_dense(DenseTensor({1}, v), {"x"})}});
    EXPECT_DOUBLE_EQ(tape.loss(), (v - 3.0) * (v - 3.0));
    EXPECT_DOUBLE_EQ(to_dense(backward(tape).at("p")).values[0], 2.0 * v - 6.0);
  }
}

TEST(BackwardTest, CrossEntropyGradientIsSoftmaxMinusOnehot) {
  const std::int64_t n = 4, k = 10;
  ModelSpec spec;
  spec.inputs = {InputSpec{"logits", {{"image", n}, {"i", k}}}};
  spec.layers = {xent_layer(k)};
  const Model m = build_model(spec);
  std::mt19937_64 rng(17);
  const Bindings data = random_inputs(m, rng, 0.0);
  const auto g = to_dense(backward(forward_with_tape(m.plan, data), {"logits"}).at("logits"));
  const DenseTensor x = to_dense(data.at("logits"));
  const auto labels = oracle::onehot_labels(to_dense(data.at("labels")));
  const DenseTensor fd = oracle::finite_diff_grad(
      [&](const DenseTensor& p) { return oracle::cross_entropy(p, labels); }, x, 1e-5);
  for (std::int64_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(x({i, j}));
    for (std::int64_t j = 0; j < k; ++j) {
      const double want = (std::exp(x({i, j})) / z - (labels[static_cast<std::size_t>(i)] == j ? 1.0 : 0.0)) /
                          static_cast<double>(n);
      EXPECT_NEAR(g({i, j}), want, 1e-12);
      EXPECT_NEAR(g({i, j}), fd({i, j}), 1e-6);
    }
  }
}

TEST(TapeTest, OneValuePerNodeAndLossMatchesEvaluate) {
  const Model m = build_model(toy_cnn_spec(4));
  std::mt19937_64 rng(2);
  const Bindings b = bind_params(random_inputs(m, rng), init_params(m.plan, 2));
  const Tape tape = forward_with_tape(m.plan, b);
  EXPECT_EQ(tape.values.size(), m.plan.size());
  EXPECT_EQ(tape.loss(), evaluate(m.plan, b).at({}));
}

TEST(BackwardProperty, TraceUsesOnlyPrimitives) {
  const std::set<std::string> allowed{"equi_join_product", "reindex", "filter_range", "aggregate",
                                      "scalar_map", "densify", "add_broadcast"};
  for (const auto& spec : {toy_cnn_spec(4), gcn_spec(12, 5, 4, 3)}) {
    const Model m = build_model(spec);
    std::mt19937_64 rng(3);
    const auto g = backward(forward_with_tape(m.plan, bind_params(random_inputs(m, rng), random_params(m.plan, rng))));
    EXPECT_FALSE(g.trace.empty());
    for (const auto& op : g.trace) EXPECT_TRUE(allowed.count(op)) << op;
  }
}

TEST(BackwardProperty, GradientsMatchParameterSchemasAndAreDeterministic) {
  const Model m = build_model(gcn_spec());
  std::mt19937_64 rng(5);
  const Bindings b = bind_params(random_inputs(m, rng), random_params(m.plan, rng));
  const auto g1 = backward(forward_with_tape(m.plan, b));
  const auto g2 = backward(forward_with_tape(m.plan, b));
  for (auto id : m.plan.inputs_with_role(InputRole::Param)) {
    const std::string& name = m.plan.node(id).name;
    EXPECT_TRUE(g1.at(name).schema() == m.plan.node(id).sig.schema) << name;
    EXPECT_EQ(to_dense(g1.at(name)).values, to_dense(g2.at(name)).values) << name;
  }
}

// Each layer alone, closed off with loss = sum(output * R) for a fixed
// random R, checked for every parameter and the layer's input.
TEST(GradcheckProperty, EveryLayerInIsolation) {
  constexpr double h = 1e-5;
  for (const auto& c : layer_cases()) {
    if (c.predict) continue;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Model m = build_model(c.spec);
      std::mt19937_64 rng(seed);
      std::optional<DenseTensor> probe;
      if (!c.scalar) {
        const std::size_t out = m.plan.output();
        const IndexSchema s = m.plan.node(out).sig.schema;
        std::vector<std::int64_t> shape;
        for (const auto& col : s.columns()) shape.push_back(col.domain_size);
        testing::Rng prng(seed + 100);
        probe = testing::random_dense(prng, shape);
        const auto p = m.plan.add_input("probe", Signature{s, 0.0});
        std::vector<std::pair<std::string, std::string>> eq;
        for (const auto& col : s.columns()) eq.emplace_back(col.name, col.name);
        const auto j = m.plan.add("probe_join", JoinOp{eq, {}}, {out, p});
        m.plan.set_output(m.plan.add("probe_loss", AggregateOp{{}, {}, AggKind::SUM}, {j}));
      }
      const std::string x = c.spec.inputs[0].name;
      auto dense_loss = [&](const oracle::DenseMap& d, const oracle::DenseMap& p, oracle::KinkMargin* km) {
        if (c.scalar) return oracle::model_loss(c.spec, d, p, km);
        const DenseTensor y = oracle::model_logits(c.spec, d, p, km);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.values[i] * probe->values[i];
        return s;
      };
      Bindings data;
      ParamStore params;
      oracle::DenseMap dd, dp;
      for (int tries = 0;; ++tries) {
        ASSERT_LT(tries, 100) << c.name;
        data = random_inputs(m, rng, 0.0);
        params = random_params(m.plan, rng);
        dd = dense_map(data);
        dp = dense_map(params);
        oracle::KinkMargin km;
        dense_loss(dd, dp, &km);
        if (km.min() > 10 * h) break;
      }
      if (probe) data["probe"] = oracle::from_dense(*probe, m.plan.node(m.plan.at("probe")).sig.schema.names());
      std::vector<std::string> wrt{x};
      for (const auto& [name, rel] : params.params) wrt.push_back(name);
      const auto g = backward(forward_with_tape(m.plan, bind_params(data, params)), wrt);
      for (const auto& name : wrt) {
        const bool is_data = name == x;
        oracle::DenseMap d2 = dd, p2 = dp;
        const DenseTensor numeric = oracle::finite_diff_grad(
            [&](const DenseTensor& v) {
              (is_data ? d2 : p2)[name] = v;
              return dense_loss(d2, p2, nullptr);
            },
            is_data ? dd.at(name) : dp.at(name), h);
        const auto cmp = oracle::compare(to_dense(g.at(name)), numeric, 1e-4, 1e-6);
        EXPECT_TRUE(cmp.pass) << c.name << " seed " << seed << " " << name << " abs " << cmp.max_abs_err;
      }
    }
  }
}

TEST(GradcheckProperty, BuiltinModelsAtDeskScale) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (const auto& spec : {toy_cnn_spec(4), gcn_spec()}) {
      const auto r = gradcheck(spec, seed);
      for (const auto& e : r.entries) {
        EXPECT_TRUE(e.pass) << spec.model << " seed " << seed << " " << e.node << " " << e.max_abs_err;
      }
    }
  }
}

}  // namespace
}  // namespace relml
