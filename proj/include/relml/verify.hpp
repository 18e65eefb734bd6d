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

// Engine against dense oracle, one layer kind at a time and for whole models.

#ifndef RELML_VERIFY_HPP
#define RELML_VERIFY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "relml/dataset.hpp"
#include "relml/gradcheck.hpp"
#include "relml/oracle/model.hpp"

namespace relml {

struct CheckResult {
  std::string name;
  std::int64_t trials = 0;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool pass = true;
};

/// A one-layer model. `scalar` cases compare the loss, `predict` cases the
/// argmax rows, the rest the layer output.
struct LayerCase {
  std::string name;
  ModelSpec spec;
  bool scalar = false;
  bool predict = false;
};

inline std::vector<LayerCase> layer_cases() {
  auto one = [](const std::string& name, InputSpec in, LayerSpec l, bool scalar = false,
                bool predict = false) {
    ModelSpec s;
    s.model = "layer-" + name;
    s.inputs = {std::move(in)};
    s.layers = {std::move(l)};
    return LayerCase{name, s, scalar, predict};
  };
  const InputSpec image = image_input(3, 3, 8);
  std::vector<LayerCase> cases;
  cases.push_back(one("conv2d", image, conv2d_layer("conv", 3, 4, 3)));
  cases.push_back(one("relu", image, simple_layer(LayerKind::relu, "relu")));
  cases.push_back(one("maxpool2x2", image, simple_layer(LayerKind::maxpool2x2, "pool")));
  cases.push_back(one("flatten", image, simple_layer(LayerKind::flatten, "flatten")));
  cases.push_back(one("fully_connected", InputSpec{"samples", {{"image", 4}, {"i", 20}}},
                      fc_layer("fc", 20, 7)));
  {
    LayerCase gc = one("graph_conv", InputSpec{"samples", {{"i", 12}, {"j", 6}}}, gc_layer("gc", 6, 5));
    gc.spec.inputs.push_back(InputSpec{"adj", {{"i", 12}, {"j", 12}}});
    cases.push_back(gc);
  }
  cases.push_back(one("cross_entropy_loss", InputSpec{"samples", {{"image", 6}, {"i", 10}}},
                      xent_layer(10), true));
  {
    LayerCase w = one("cross_entropy_loss_weighted", InputSpec{"samples", {{"i", 12}, {"j", 3}}},
                      xent_layer(3, "loss_weights"), true);
    w.spec.inputs.push_back(InputSpec{"loss_weights", {{"i", 12}}});
    cases.push_back(w);
  }
  cases.push_back(one("argmax_predict", InputSpec{"samples", {{"image", 9}, {"i", 4}}},
                      simple_layer(LayerKind::argmax_predict, "predict"), false, true));
  return cases;
}

namespace detail {

inline void fold(CheckResult& r, const oracle::Comparison& c) {
  r.max_abs_err = std::max(r.max_abs_err, c.max_abs_err);
  r.max_rel_err = std::max(r.max_rel_err, c.max_rel_err);
  r.pass = r.pass && c.pass;
}

}  // namespace detail

/// `trials` random points. Input sparsity sweeps from dense to empty;
/// parameters alternate between fresh initialization (empty biases) and
/// fully random values.
inline CheckResult check_layer(const LayerCase& c, std::uint64_t seed, std::int64_t trials = 100,
                               double rel = 1e-9, double abs_floor = 1e-12) {
  static constexpr double kZeroFraction[] = {0.0, 0.3, 0.7, 0.95, 1.0};
  const Model model = build_model(c.spec);
  CheckResult r;
  r.name = c.name;
  std::mt19937_64 rng(seed);
  for (std::int64_t t = 0; t < trials; ++t) {
    const Bindings data = random_inputs(model, rng, kZeroFraction[t % 5]);
    const ParamStore params =
        t % 2 == 0 ? init_params(model.plan, rng()) : random_params(model.plan, rng);
    const auto values = evaluate_all(model.plan, bind_params(data, params));
    const auto dd = dense_map(data);
    const auto dp = dense_map(params);
    ++r.trials;
    if (c.scalar) {
      oracle::DenseTensor want({}, oracle::model_loss(c.spec, dd, dp));
      detail::fold(r, oracle::compare(oracle::to_dense(values[model.loss]), want, rel, abs_floor));
    } else if (c.predict) {
      const auto got = predictions_vector(argmax_predict(values[model.logits]));
      const auto want = oracle::argmax_rows(oracle::to_dense(data.at(c.spec.inputs[0].name)));
      if (got != want) r.pass = false;
    } else {
      const auto want = oracle::model_logits(c.spec, dd, dp);
      detail::fold(r, oracle::compare(oracle::to_dense(values[model.plan.output()]), want, rel, abs_floor));
    }
  }
  return r;
}

/// Whole-model loss against the oracle at initialized parameters and random
/// sparse data.
inline CheckResult check_model_forward(const ModelSpec& spec, std::uint64_t seed,
                                       std::int64_t trials = 1, double rel = 1e-7,
                                       double abs_floor = 1e-12) {
  const Model model = build_model(spec);
  CheckResult r;
  r.name = spec.model;
  std::mt19937_64 rng(seed);
  for (std::int64_t t = 0; t < trials; ++t) {
    const Bindings data = random_inputs(model, rng);
    const ParamStore params = init_params(model.plan, rng());
    const double got = evaluate(model.plan, bind_params(data, params)).at({});
    const double want = oracle::model_loss(spec, dense_map(data), dense_map(params));
    ++r.trials;
    detail::fold(r, oracle::compare(oracle::DenseTensor({}, got), oracle::DenseTensor({}, want), rel,
                                    abs_floor));
  }
  return r;
}

}  // namespace relml

#endif  // RELML_VERIFY_HPP
