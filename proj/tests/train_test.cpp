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

#include "relml/dataset.hpp"
#include "relml/oracle/dense.hpp"
#include "relml/train.hpp"

namespace relml {
namespace {

using oracle::DenseTensor;
using oracle::to_dense;

bool same(const ParamStore& a, const ParamStore& b) {
  if (a.params.size() != b.params.size()) return false;
  for (const auto& [name, rel] : a.params) {
    const auto& other = b.at(name);
    if (!(rel.schema() == other.schema())) return false;
    if (to_dense(rel).values != to_dense(other).values) return false;
  }
  return true;
}

TensorRelation scalar_param(double v) { return oracle::from_dense(DenseTensor({1}, v), {"x"}); }

GradientSet grads_of(const std::string& name, TensorRelation g) {
  GradientSet s;
  s.grads.emplace(name, std::move(g));
  return s;
}

TEST(InitParamsTest, DeterministicPerSeed) {
  const auto a = init_params(toy_cnn_spec(), 7);
  const auto b = init_params(toy_cnn_spec(), 7);
  const auto c = init_params(toy_cnn_spec(), 8);
  EXPECT_TRUE(same(a, b));
  EXPECT_FALSE(same(a, c));
}

TEST(InitParamsTest, BiasesAreEmptyAndWeightsDense) {
  const Model m = build_model(cnn_spec());
  const auto p = init_params(m.plan, 1);
  for (auto id : m.plan.inputs_with_role(InputRole::Param)) {
    const auto& node = m.plan.node(id);
    const auto& rel = p.at(node.name);
    if (std::get<InputOp>(node.op).init == ParamInit::Zero) {
      EXPECT_TRUE(rel.empty()) << node.name;
      EXPECT_EQ(rel.default_value(), 0.0);
    } else {
      EXPECT_EQ(static_cast<std::int64_t>(rel.size()), rel.schema().dense_size()) << node.name;
    }
  }
}

TEST(InitParamsProperty, WeightsStayWithinFanInBound) {
  const Model m = build_model(cnn_spec());
  const auto p = init_params(m.plan, 3);
  std::int64_t draws = 0;
  for (auto id : m.plan.inputs_with_role(InputRole::Param)) {
    const auto& in = std::get<InputOp>(m.plan.node(id).op);
    if (in.init != ParamInit::Uniform) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in.fan_in));
    const auto& rel = p.at(m.plan.node(id).name);
    double lo = bound, hi = -bound;
    for (std::size_t k = 0; k < rel.size(); ++k) {
      lo = std::min(lo, rel.value(k));
      hi = std::max(hi, rel.value(k));
    }
    EXPECT_GE(lo, -bound);
    EXPECT_LE(hi, bound);
    if (rel.size() >= 1000) {
      EXPECT_LT(lo, -0.95 * bound);
      EXPECT_GT(hi, 0.95 * bound);
    }
    draws += static_cast<std::int64_t>(rel.size());
  }
  EXPECT_GE(draws, 10000);
}

TEST(SgdStepTest, Arithmetic) {
  ParamStore p;
  p.params.emplace("w", scalar_param(2.0));
  const auto q = sgd_step(p, grads_of("w", scalar_param(0.5)), 1.0);
  EXPECT_EQ(q.at("w").at({0}), 1.5);
}

TEST(SgdStepTest, ZeroGradientLeavesParamsAlone) {
  const auto p = init_params(gcn_spec(), 2);
  GradientSet g;
  for (const auto& [name, rel] : p.params) g.grads.emplace(name, TensorRelation(rel.schema()));
  EXPECT_TRUE(same(sgd_step(p, g, 0.3), p));
}

TEST(SgdStepTest, SchemaMismatch) {
  ParamStore p;
  p.params.emplace("w", scalar_param(2.0));
  const auto bad = oracle::from_dense(DenseTensor({2}, 1.0), {"x"});
  try {
    sgd_step(p, grads_of("w", bad), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SchemaMismatch);
  }
  EXPECT_THROW(sgd_step(p, grads_of("v", scalar_param(1.0)), 1.0), Error);
}

// f(p) = (p - 3)^2 written as p*p - 6p + 9.
Plan quadratic_plan() {
  Plan plan;
  const auto p = plan.add_param("p", IndexSchema::of({{"x", 1}}), "val", ParamInit::Uniform, 1);
  const auto sq = plan.add("sq", JoinOp{{{"x", "x"}}, {}}, {p, p});
  const auto sqs = plan.add("sq_sum", AggregateOp{{}, {}, AggKind::SUM}, {sq});
  const auto lin = plan.add("lin", AggregateOp{{}, {}, AggKind::SUM}, {p});
  const auto lin6 = plan.add("lin6", MapOp{ScalarFn::mul_const(-6.0)}, {lin});
  const auto sum = plan.add("sum", AddOp{}, {sqs, lin6});
  plan.add("f", MapOp{ScalarFn::add_const(9.0)}, {sum});
  return plan;
}

TEST(SgdStepProperty, QuadraticIteratesApproachMinimumMonotonically) {
  const Plan plan = quadratic_plan();
  for (double lr : {0.05, 0.3, 0.9}) {
    ParamStore p;
    p.params.emplace("p", scalar_param(-4.0));
    double dist = 7.0;
    for (int k = 0; k < 40; ++k) {
      const auto g = backward(forward_with_tape(plan, bind_params({}, p)));
      p = sgd_step(p, g, lr);
      const double d = std::abs(p.at("p").at({0}) - 3.0);
      EXPECT_LT(d, dist) << "lr " << lr << " step " << k;
      dist = d;
      if (d == 0.0) break;
    }
  }
}

struct GcnFixture {
  ModelSpec spec = gcn_spec();
  Model model = build_model(spec);
  Bindings data = generate_sbm(SbmParams{}, 4);
};

TEST(TrainFullTest, ZeroEpochsChangeNothing) {
  GcnFixture f;
  const auto p = init_params(f.model.plan, 4);
  TrainConfig c;
  c.max_epochs = 0;
  const auto r = train_full(f.model, f.data, p, c);
  EXPECT_TRUE(r.history.empty());
  EXPECT_TRUE(same(r.params, p));
}

TEST(TrainFullTest, GcnLossDecreasesAndHistoryIsDeterministic) {
  GcnFixture f;
  TrainConfig c = config_from_spec(f.spec);
  c.max_epochs = 50;
  const auto a = train_full(f.model, f.data, init_params(f.model.plan, 4), c);
  const auto b = train_full(f.model, f.data, init_params(f.model.plan, 4), c);
  ASSERT_EQ(a.history.size(), 50u);
  EXPECT_LT(a.history.back().loss, a.history.front().loss);
  EXPECT_EQ(a.history, b.history);
  EXPECT_TRUE(same(a.params, b.params));
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    EXPECT_EQ(a.history[k].epoch, static_cast<std::int64_t>(k + 1));
    EXPECT_TRUE(std::isfinite(a.history[k].loss));
  }
}

TEST(TrainFullTest, LossThresholdStopsEarly) {
  GcnFixture f;
  TrainConfig c = config_from_spec(f.spec);
  c.loss_threshold = 10.0;
  const auto r = train_full(f.model, f.data, init_params(f.model.plan, 4), c);
  EXPECT_EQ(r.history.size(), 1u);
}

TEST(TrainFullTest, DivergenceIsReportedWithEpoch) {
  GcnFixture f;
  TrainConfig c;
  c.learning_rate = 1e200;
  c.max_epochs = 5;
  try {
    train_full(f.model, f.data, init_params(f.model.plan, 4), c);
    FAIL() << "expected NonFiniteLoss";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteLoss) << e.what();
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c.learning_rate = 0.1;
  c.batch_size = -1;
  EXPECT_THROW(c.validate(), Error);
  GcnFixture f;
  TrainConfig big;
  big.batch_size = 65;
  try {
    train_minibatch(f.model, f.data, init_params(f.model.plan, 1), big);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidParams);
  }
}

TEST(TrainConfigTest, SpecBlockFeedsDefaults) {
  const auto c = config_from_spec(toy_cnn_spec());
  EXPECT_EQ(c.learning_rate, 0.05);
  EXPECT_EQ(c.max_epochs, 30);
  EXPECT_EQ(c.batch_size, 16);
}

TEST(EpochBatchesProperty, PartitionOfSampleIds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    for (std::int64_t bs : {1, 5, 16, 64}) {
      for (int epoch = 0; epoch < 3; ++epoch) {
        const auto batches = epoch_batches(rng, 64, bs);
        std::vector<int> seen(64, 0);
        for (const auto& b : batches) {
          EXPECT_LE(static_cast<std::int64_t>(b.size()), bs);
          EXPECT_TRUE(std::is_sorted(b.begin(), b.end()));
          for (auto i : b) ++seen[static_cast<std::size_t>(i)];
        }
        for (int v : seen) EXPECT_EQ(v, 1);
      }
    }
  }
}

TEST(TrainMinibatchTest, FullSizeBatchMatchesFullBatchTraining) {
  const ModelSpec spec = toy_cnn_spec(16);
  const Model m = build_model(spec);
  ToyImageParams tp;
  tp.images = 16;
  const Bindings data = generate_toy_images(tp, 5);
  TrainConfig c = config_from_spec(spec);
  c.max_epochs = 4;
  c.batch_size = 16;
  const auto mini = train_minibatch(m, data, init_params(m.plan, 5), c);
  const auto full = train_full(m, data, init_params(m.plan, 5), c);
  EXPECT_EQ(mini.history, full.history);
  EXPECT_TRUE(same(mini.params, full.params));
}

TEST(TrainMinibatchTest, ToyCnnLossDecreasesAndIsDeterministic) {
  const ModelSpec spec = toy_cnn_spec();
  const Model m = build_model(spec);
  const Bindings data = generate_toy_images(ToyImageParams{}, 9);
  TrainConfig c = config_from_spec(spec);
  c.seed = 9;
  c.max_epochs = 10;
  const auto a = train_minibatch(m, data, init_params(m.plan, 9), c);
  const auto b = train_minibatch(m, data, init_params(m.plan, 9), c);
  EXPECT_EQ(a.history, b.history);
  EXPECT_LT(a.history.back().loss, a.history.front().loss);
}

TEST(DatasetTest, ToyImagesDeterministicAndLabelled) {
  const auto a = generate_toy_images(ToyImageParams{}, 3);
  const auto b = generate_toy_images(ToyImageParams{}, 3);
  EXPECT_EQ(to_dense(a.at("samples")).values, to_dense(b.at("samples")).values);
  const auto labels = labels_vector(a.at("labels"));
  for (std::size_t n = 0; n < labels.size(); ++n) EXPECT_EQ(labels[n], static_cast<std::int64_t>(n % 2));
  ToyImageParams bad;
  bad.classes = 1;
  EXPECT_THROW(generate_toy_images(bad, 0), Error);
}

TEST(DatasetTest, SbmAdjacencyIsSymmetricWithEmptyDiagonal) {
  const auto g = generate_sbm(SbmParams{}, 0);
  const auto e = to_dense(g.at("edges"));
  for (std::int64_t i = 0; i < 64; ++i) {
    EXPECT_EQ(e({i, i}), 0.0);
    for (std::int64_t j = 0; j < 64; ++j) EXPECT_EQ(e({i, j}), e({j, i}));
  }
}

TEST(DatasetProperty, SbmIntraBlockEdgesDominate) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto e = to_dense(generate_sbm(SbmParams{}, seed).at("edges"));
    double intra = 0.0, inter = 0.0;
    for (std::int64_t i = 0; i < 64; ++i)
      for (std::int64_t j = 0; j < 64; ++j) ((i < 32) == (j < 32) ? intra : inter) += e({i, j});
    if (intra > inter) ++wins;
  }
  EXPECT_EQ(wins, 20);
}

}  // namespace
}  // namespace relml
