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

#ifndef RELML_TRAIN_HPP
#define RELML_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "relml/autodiff.hpp"
#include "relml/layers.hpp"

namespace relml {

/// Named parameter relations. Schemas are fixed at initialization.
struct ParamStore {
  std::map<std::string, TensorRelation> params;
  std::uint64_t seed = 0;

  const TensorRelation& at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw Error(Errc::MissingInput, "no parameter '" + name + "'");
    return it->second;
  }
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::int64_t max_epochs = 1;
  std::int64_t batch_size = 0;  // 0: the whole dataset
  std::optional<double> loss_threshold;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw Error(Errc::InvalidParams, "learning rate must be positive");
    }
    if (max_epochs < 0) throw Error(Errc::InvalidParams, "epochs must be non-negative");
    if (batch_size < 0) throw Error(Errc::InvalidParams, "batch size must be positive or 0 (all)");
  }
};

/// Spec defaults, then explicit overrides.
inline TrainConfig config_from_spec(const ModelSpec& spec) {
  TrainConfig c;
  if (spec.train.learning_rate) c.learning_rate = *spec.train.learning_rate;
  if (spec.train.max_epochs) c.max_epochs = *spec.train.max_epochs;
  if (spec.train.batch_size) c.batch_size = *spec.train.batch_size;
  if (spec.train.loss_threshold) c.loss_threshold = *spec.train.loss_threshold;
  if (spec.train.seed) c.seed = *spec.train.seed;
  return c;
}

struct EpochRecord {
  std::int64_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using History = std::vector<EpochRecord>;

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], stored densely;
/// biases empty (all zero). Parameters are drawn in plan order from one
/// generator seeded with `seed`.
inline ParamStore init_params(const Plan& plan, std::uint64_t seed) {
  ParamStore store;
  store.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto id : plan.inputs_with_role(InputRole::Param)) {
    const PlanNode& node = plan.node(id);
    const auto& in = std::get<InputOp>(node.op);
    const IndexSchema& schema = node.sig.schema;
    if (in.init != ParamInit::Uniform) {
      store.params.emplace(node.name, TensorRelation(schema));
      continue;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(in.fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    RelationBuilder b(schema, 0.0);
    for_each_coordinate(schema, [&](std::span<const std::int64_t> idx) { b.push(idx, dist(rng)); });
    store.params.emplace(node.name, std::move(b).canonical());
  }
  return store;
}

inline ParamStore init_params(const ModelSpec& spec, std::uint64_t seed) {
  return init_params(build_model(spec).plan, seed);
}

/// p <- p - lr * g, coordinate-wise.
inline ParamStore sgd_step(const ParamStore& params, const GradientSet& grads, double lr) {
  ParamStore out = params;
  for (const auto& [name, g] : grads.grads) {
    auto it = out.params.find(name);
    if (it == out.params.end()) throw Error(Errc::SchemaMismatch, "no parameter '" + name + "'");
    if (!(it->second.schema() == g.schema())) {
      throw Error(Errc::SchemaMismatch, "gradient schema for '" + name + "'");
    }
    if (g.empty() && g.default_value() == 0.0) continue;
    it->second = add(it->second, scalar_map(g, ScalarFn::mul_const(-lr)));
    for (std::size_t k = 0; k < it->second.size(); ++k) {
      if (!std::isfinite(it->second.value(k))) {
        throw Error(Errc::NonFiniteLoss, "parameter '" + name + "' became non-finite");
      }
    }
  }
  return out;
}

inline Bindings bind_params(const Bindings& data, const ParamStore& params) {
  Bindings b = data;
  for (const auto& [name, rel] : params.params) b[name] = rel;
  return b;
}

/// Loss and accuracy of one forward pass.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  TensorRelation logits;
};

inline double model_accuracy(const Model& model, const std::vector<TensorRelation>& values,
                             const Bindings& data) {
  if (model.logits == Plan::npos || model.labels.empty()) return 0.0;
  const TensorRelation* mask = nullptr;
  if (!model.loss_weights.empty()) mask = &data.at(model.loss_weights);
  return accuracy(values[model.logits], data.at(model.labels), mask);
}

inline Evaluation evaluate_model(const Model& model, const Bindings& data,
                                 const ParamStore& params) {
  auto values = evaluate_all(model.plan, bind_params(data, params));
  Evaluation e;
  if (model.has_loss()) e.loss = values[model.loss].at({});
  e.accuracy = model_accuracy(model, values, data);
  if (model.logits != Plan::npos) e.logits = values[model.logits];
  return e;
}

namespace detail {

struct StepResult {
  double loss;
  std::int64_t hits;
  std::int64_t counted;
  ParamStore params;
};

inline StepResult train_step_unchecked(const Model& model, const Bindings& data,
                                       const ParamStore& params, double lr, std::int64_t epoch) {
  Tape tape = forward_with_tape(model.plan, bind_params(data, params));
  const double loss = tape.loss();
  if (!std::isfinite(loss)) {
    throw Error(Errc::NonFiniteLoss, "loss " + std::to_string(loss) + " at epoch " +
                                         std::to_string(epoch));
  }
  StepResult r{loss, 0, 0, {}};
  if (model.logits != Plan::npos && !model.labels.empty()) {
    const auto pred = predictions_vector(argmax_predict(tape.values[model.logits]));
    const auto truth = labels_vector(data.at(model.labels));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (!model.loss_weights.empty()) {
        const std::int64_t idx[1] = {static_cast<std::int64_t>(i)};
        if (data.at(model.loss_weights).at(idx) == 0.0) continue;
      }
      ++r.counted;
      if (pred[i] == truth[i]) ++r.hits;
    }
  }
  r.params = sgd_step(params, backward(tape), lr);
  return r;
}

// Diverged values surface as domain errors (log of inf or NaN) or as
// non-finite parameters; both are reported as NonFiniteLoss with the epoch.
inline StepResult train_step(const Model& model, const Bindings& data, const ParamStore& params,
                             double lr, std::int64_t epoch) {
  try {
    return train_step_unchecked(model, data, params, lr, epoch);
  } catch (const Error& e) {
    if (e.code() != Errc::DomainError && e.code() != Errc::NonFiniteLoss) throw;
    const std::string what = e.what();
    if (e.code() == Errc::NonFiniteLoss && what.find("epoch") != std::string::npos) throw;
    throw Error(Errc::NonFiniteLoss, "diverged at epoch " + std::to_string(epoch) + " (" + what + ")");
  }
}

inline bool reached(const TrainConfig& c, double loss) {
  return c.loss_threshold && loss <= *c.loss_threshold;
}

}  // namespace detail

struct TrainResult {
  ParamStore params;
  History history;
};

/// Full-batch gradient descent: forward, backward, update, once per epoch.
/// Each history row holds the loss and accuracy seen by that epoch's update.
inline TrainResult train_full(const Model& model, const Bindings& data, ParamStore params,
                              const TrainConfig& config) {
  config.validate();
  if (!model.has_loss()) throw Error(Errc::InvalidParams, "model has no loss");
  TrainResult result;
  for (std::int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto step = detail::train_step(model, data, params, config.learning_rate, epoch);
    const double acc =
        step.counted == 0 ? 0.0 : static_cast<double>(step.hits) / static_cast<double>(step.counted);
    result.history.push_back({epoch, step.loss, acc});
    params = std::move(step.params);
    if (detail::reached(config, step.loss)) break;
  }
  result.params = std::move(params);
  return result;
}

/// Per epoch, a seeded shuffle of sample ids cut into consecutive batches.
/// Ids are sorted within each batch.
inline std::vector<std::vector<std::int64_t>> epoch_batches(std::mt19937_64& rng, std::int64_t n,
                                                            std::int64_t batch_size) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), std::int64_t{0});
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::vector<std::int64_t>> batches;
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t end = std::min(n, start + batch_size);
    std::vector<std::int64_t> b(ids.begin() + start, ids.begin() + end);
    std::sort(b.begin(), b.end());
    batches.push_back(std::move(b));
  }
  return batches;
}

/// Minibatch SGD over the sample axis of `model`'s first input. Every data
/// relation whose first column is that axis is cut per batch. The recorded
/// epoch loss is the mean batch loss.
inline TrainResult train_minibatch(const Model& model, const Bindings& data, ParamStore params,
                                   const TrainConfig& config) {
  config.validate();
  if (!model.has_loss()) throw Error(Errc::InvalidParams, "model has no loss");
  const Column axis = model.spec.inputs.at(0).schema.at(0);
  const std::int64_t n = axis.domain_size;
  const std::int64_t bs = config.batch_size == 0 ? n : config.batch_size;
  if (bs > n) {
    throw Error(Errc::InvalidParams, "batch size " + std::to_string(bs) + " exceeds dataset size " +
                                         std::to_string(n));
  }
  std::map<std::int64_t, Model> by_size;
  auto model_for = [&](std::int64_t size) -> const Model& {
    auto it = by_size.find(size);
    if (it == by_size.end()) {
      it = by_size.emplace(size, build_model(with_sample_count(model.spec, size))).first;
    }
    return it->second;
  };
  std::mt19937_64 rng(config.seed);
  TrainResult result;
  for (std::int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    std::int64_t hits = 0, counted = 0;
    auto batches = epoch_batches(rng, n, bs);
    for (const auto& ids : batches) {
      Bindings batch;
      for (const auto& [name, rel] : data) {
        const bool cut = rel.rank() > 0 && rel.schema()[0].name == axis.name &&
                         rel.schema()[0].domain_size == n;
        batch[name] = cut ? gather(rel, axis.name, ids) : rel;
      }
      auto step = detail::train_step(model_for(static_cast<std::int64_t>(ids.size())), batch,
                                     params, config.learning_rate, epoch);
      loss_sum += step.loss;
      hits += step.hits;
      counted += step.counted;
      params = std::move(step.params);
    }
    const double loss = loss_sum / static_cast<double>(batches.size());
    const double acc = counted == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(counted);
    result.history.push_back({epoch, loss, acc});
    if (detail::reached(config, loss)) break;
  }
  result.params = std::move(params);
  return result;
}

}  // namespace relml

#endif  // RELML_TRAIN_HPP
