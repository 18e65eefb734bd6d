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

#ifndef RELML_DATASET_HPP
#define RELML_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "relml/layers.hpp"
#include "relml/train.hpp"

namespace relml {

struct ToyImageParams {
  std::int64_t images = 64;
  std::int64_t classes = 2;
  std::int64_t extent = 8;
  std::int64_t channels = 1;
  double noise = 0.1;  // probability that a pixel gets a random speck
};

/// Class k lights a 3x3 block at its own spot: row k*s, column (K-1-k)*s
/// with s = (extent-3)/(K-1). Sample n has label n mod K. Returns
/// "samples" (image, channel, r, c) and one-hot "labels" (image, label).
inline Bindings generate_toy_images(const ToyImageParams& p, std::uint64_t seed) {
  if (p.images < 1 || p.classes < 2 || p.channels < 1 || p.extent < 3 ||
      p.extent - 3 < p.classes - 1 || p.noise < 0.0 || p.noise > 1.0) {
    throw Error(Errc::InvalidParams, "toy-images needs images >= 1, classes >= 2, channels >= 1, "
                                     "extent - 3 >= classes - 1 and noise in [0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto schema = IndexSchema::of(
      {{"image", p.images}, {"channel", p.channels}, {"r", p.extent}, {"c", p.extent}});
  RelationBuilder samples(schema, 0.0);
  RelationBuilder labels(IndexSchema::of({{"image", p.images}, {"label", p.classes}}), 0.0);
  const std::int64_t step = (p.extent - 3) / (p.classes - 1);
  for (std::int64_t n = 0; n < p.images; ++n) {
    const std::int64_t k = n % p.classes;
    const std::int64_t r0 = k * step, c0 = (p.classes - 1 - k) * step;
    const std::int64_t lab[2] = {n, k};
    labels.push(lab, 1.0);
    for (std::int64_t ch = 0; ch < p.channels; ++ch)
      for (std::int64_t r = 0; r < p.extent; ++r)
        for (std::int64_t c = 0; c < p.extent; ++c) {
          double v = (r >= r0 && r < r0 + 3 && c >= c0 && c < c0 + 3) ? 1.0 : 0.0;
          if (u(rng) < p.noise) v += 0.5 * u(rng);
          if (v != 0.0) {
            const std::int64_t idx[4] = {n, ch, r, c};
            samples.push(idx, v);
          }
        }
  }
  Bindings out;
  out["samples"] = std::move(samples).canonical();
  out["labels"] = std::move(labels).canonical();
  return out;
}

struct SbmParams {
  std::int64_t nodes = 64;
  std::int64_t blocks = 2;
  double p_intra = 0.2;
  double p_inter = 0.02;
  std::int64_t features = 16;
  double train_fraction = 0.5;
  double feature_noise = 0.1;
};

/// Stochastic block model with contiguous blocks. Node features: one random
/// hot feature inside its block's slice of the feature axis, plus random
/// noise bits anywhere. Returns "edges" (symmetric 0/1, empty diagonal),
/// "adj" (row-normalized with self-loops), "samples" (i, j), one-hot
/// "labels" (i, label), "train_mask", "test_mask" and "loss_weights" (the
/// train mask divided by its size).
inline Bindings generate_sbm(const SbmParams& p, std::uint64_t seed) {
  if (p.nodes < 2 || p.blocks < 2 || p.blocks > p.nodes || p.features < p.blocks ||
      p.p_intra < 0.0 || p.p_intra > 1.0 || p.p_inter < 0.0 || p.p_inter > 1.0 ||
      !(p.train_fraction > 0.0) || p.train_fraction > 1.0 || p.feature_noise < 0.0 ||
      p.feature_noise > 1.0) {
    throw Error(Errc::InvalidParams, "sbm-graph needs nodes >= blocks >= 2, features >= blocks, "
                                     "probabilities in [0, 1] and train fraction in (0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::int64_t n = p.nodes;
  auto block = [&](std::int64_t i) { return i * p.blocks / n; };

  const auto square = IndexSchema::of({{"i", n}, {"j", n}});
  std::vector<std::pair<std::int64_t, std::int64_t>> edge_list;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = i + 1; j < n; ++j) {
      const double prob = block(i) == block(j) ? p.p_intra : p.p_inter;
      if (u(rng) < prob) {
        edge_list.emplace_back(i, j);
        edge_list.emplace_back(j, i);
      }
    }
  RelationBuilder edges(square, 0.0);
  for (auto [i, j] : edge_list) {
    const std::int64_t idx[2] = {i, j};
    edges.push(idx, 1.0);
  }

  const std::int64_t width = p.features / p.blocks;
  RelationBuilder feats(IndexSchema::of({{"i", n}, {"j", p.features}}), 0.0);
  RelationBuilder labels(IndexSchema::of({{"i", n}, {"label", p.blocks}}), 0.0);
  std::vector<double> row(static_cast<std::size_t>(p.features));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t b = block(i);
    std::fill(row.begin(), row.end(), 0.0);
    const std::int64_t hot = b * width + static_cast<std::int64_t>(u(rng) * static_cast<double>(width));
    row[static_cast<std::size_t>(std::min(hot, (b + 1) * width - 1))] = 1.0;
    for (auto& v : row) {
      if (u(rng) < p.feature_noise) v = 1.0;
    }
    for (std::int64_t j = 0; j < p.features; ++j) {
      if (row[static_cast<std::size_t>(j)] != 0.0) {
        const std::int64_t idx[2] = {i, j};
        feats.push(idx, row[static_cast<std::size_t>(j)]);
      }
    }
    const std::int64_t lab[2] = {i, b};
    labels.push(lab, 1.0);
  }

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::int64_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::llround(p.train_fraction * static_cast<double>(n))));
  std::vector<bool> train(static_cast<std::size_t>(n), false);
  for (std::int64_t k = 0; k < n_train; ++k) train[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;
  const auto vec = IndexSchema::of({{"i", n}});
  RelationBuilder train_mask(vec, 0.0), test_mask(vec, 0.0), weights(vec, 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t idx[1] = {i};
    if (train[static_cast<std::size_t>(i)]) {
      train_mask.push(idx, 1.0);
      weights.push(idx, 1.0 / static_cast<double>(n_train));
    } else {
      test_mask.push(idx, 1.0);
    }
  }

  Bindings out;
  out["edges"] = std::move(edges).canonical();
  out["adj"] = normalize_adjacency(out["edges"], true);
  out["samples"] = std::move(feats).canonical();
  out["labels"] = std::move(labels).canonical();
  out["train_mask"] = std::move(train_mask).canonical();
  out["test_mask"] = std::move(test_mask).canonical();
  out["loss_weights"] = std::move(weights).canonical();
  return out;
}

// ---------------------------------------------------------------------------
// Random fixtures for verification runs.

/// Random values for every data input of `model`. Sample-like inputs get
/// uniform values in [-1, 1] with `zero_fraction` of them absent; labels are
/// random one-hot rows; "adj"-style square inputs are normalized random
/// graphs; loss weights mark a random half of the samples.
inline Bindings random_inputs(const Model& model, std::mt19937_64& rng, double zero_fraction = 0.3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Bindings out;
  const Plan& plan = model.plan;
  for (auto id : plan.inputs_with_role(InputRole::Data)) {
    const PlanNode& node = plan.node(id);
    const IndexSchema& s = node.sig.schema;
    if (node.name == model.labels) {
      RelationBuilder b(s, 0.0);
      for (std::int64_t i = 0; i < s[0].domain_size; ++i) {
        const std::int64_t idx[2] = {i, static_cast<std::int64_t>(u(rng) * static_cast<double>(s[1].domain_size)) % s[1].domain_size};
        b.push(idx, 1.0);
      }
      out[node.name] = std::move(b).canonical();
    } else if (node.name == model.loss_weights) {
      std::vector<std::int64_t> picked;
      for (std::int64_t i = 0; i < s[0].domain_size; ++i) {
        if (u(rng) < 0.5) picked.push_back(i);
      }
      if (picked.empty()) picked.push_back(0);
      RelationBuilder b(s, 0.0);
      for (auto i : picked) {
        const std::int64_t idx[1] = {i};
        b.push(idx, 1.0 / static_cast<double>(picked.size()));
      }
      out[node.name] = std::move(b).canonical();
    } else if (s.rank() == 2 && s[0].domain_size == s[1].domain_size && node.name != "samples") {
      RelationBuilder b(s, 0.0);
      const std::int64_t n = s[0].domain_size;
      std::vector<std::pair<std::int64_t, std::int64_t>> e;
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = i + 1; j < n; ++j)
          if (u(rng) < 0.3) {
            e.emplace_back(i, j);
            e.emplace_back(j, i);
          }
      for (auto [i, j] : e) {
        const std::int64_t idx[2] = {i, j};
        b.push(idx, 1.0);
      }
      out[node.name] = normalize_adjacency(std::move(b).canonical(), true);
    } else {
      RelationBuilder b(s, 0.0);
      for_each_coordinate(s, [&](std::span<const std::int64_t> idx) {
        if (u(rng) < zero_fraction) return;
        const double v = 2.0 * u(rng) - 1.0;
        if (v != 0.0) b.push(idx, v);
      });
      out[node.name] = std::move(b).canonical();
    }
  }
  return out;
}

/// Every parameter coordinate uniform in [-scale, scale], biases included.
inline ParamStore random_params(const Plan& plan, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  ParamStore store;
  for (auto id : plan.inputs_with_role(InputRole::Param)) {
    const IndexSchema& s = plan.node(id).sig.schema;
    RelationBuilder b(s, 0.0);
    for_each_coordinate(s, [&](std::span<const std::int64_t> idx) { b.push(idx, u(rng)); });
    store.params.emplace(plan.node(id).name, std::move(b).canonical());
  }
  return store;
}

}  // namespace relml

#endif  // RELML_DATASET_HPP
