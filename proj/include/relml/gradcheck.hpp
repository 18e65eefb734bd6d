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

#ifndef RELML_GRADCHECK_HPP
#define RELML_GRADCHECK_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "relml/autodiff.hpp"
#include "relml/dataset.hpp"
#include "relml/oracle/model.hpp"

namespace relml {

struct GradcheckEntry {
  std::string node;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::int64_t coordinates = 0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  std::uint64_t seed = 0;
  std::int64_t resamples = 0;  // points rejected as too close to a kink
  bool pass = true;
};

struct GradcheckOptions {
  double h = 1e-5;
  double rel_tol = 1e-4;
  double abs_tol = 1e-6;
  std::int64_t max_resamples = 100;
};

inline oracle::DenseMap dense_map(const Bindings& rels) {
  oracle::DenseMap m;
  for (const auto& [name, rel] : rels) m.emplace(name, oracle::to_dense(rel));
  return m;
}

inline oracle::DenseMap dense_map(const ParamStore& params) { return dense_map(params.params); }

/// Autodiff gradients of every parameter against central differences of the
/// dense oracle loss, at a random point drawn from `seed`. Points whose
/// distance to a relu kink or a pooling tie is within 10h are redrawn.
inline GradcheckReport gradcheck(const ModelSpec& spec, std::uint64_t seed,
                                 const GradcheckOptions& opt = {}) {
  const Model model = build_model(spec);
  GradcheckReport report;
  report.seed = seed;
  std::mt19937_64 rng(seed);
  Bindings data;
  ParamStore params;
  oracle::DenseMap dense_data, dense_params;
  for (;; ++report.resamples) {
    if (report.resamples > opt.max_resamples) {
      throw Error(Errc::InvalidParams, "no kink-free point found");
    }
    data = random_inputs(model, rng);
    params = random_params(model.plan, rng);
    dense_data = dense_map(data);
    dense_params = dense_map(params);
    oracle::KinkMargin margin;
    oracle::model_loss(spec, dense_data, dense_params, &margin);
    if (margin.min() > 10.0 * opt.h) break;
  }

  const Tape tape = forward_with_tape(model.plan, bind_params(data, params));
  const GradientSet grads = backward(tape);
  for (const auto& [name, rel] : params.params) {
    const oracle::DenseTensor analytic = oracle::to_dense(grads.at(name));
    oracle::DenseMap probe = dense_params;
    const oracle::DenseTensor numeric = oracle::finite_diff_grad(
        [&](const oracle::DenseTensor& p) {
          probe[name] = p;
          return oracle::model_loss(spec, dense_data, probe);
        },
        dense_params.at(name), opt.h);
    const auto cmp = oracle::compare(analytic, numeric, opt.rel_tol, opt.abs_tol);
    report.entries.push_back({name, cmp.max_abs_err, cmp.max_rel_err,
                              static_cast<std::int64_t>(numeric.size()), cmp.pass});
    report.pass = report.pass && cmp.pass;
  }
  return report;
}

inline nlohmann::json to_json(const GradcheckReport& r) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& e : r.entries) {
    nodes.push_back({{"node", e.node},
                     {"max_abs_err", e.max_abs_err},
                     {"max_rel_err", e.max_rel_err},
                     {"coordinates", e.coordinates},
                     {"pass", e.pass}});
  }
  return {{"seed", r.seed}, {"resamples", r.resamples}, {"pass", r.pass}, {"nodes", nodes}};
}

}  // namespace relml

#endif  // RELML_GRADCHECK_HPP
