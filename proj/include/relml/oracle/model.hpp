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

#ifndef RELML_ORACLE_MODEL_HPP
#define RELML_ORACLE_MODEL_HPP

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "relml/model_spec.hpp"
#include "relml/oracle/dense.hpp"

namespace relml::oracle {

using DenseMap = std::map<std::string, DenseTensor>;

/// Distance of the evaluation point from the nearest non-differentiable
/// spot: smallest |relu input|, and smallest gap between the two largest
/// entries of a pooling window whose maximum is positive.
struct KinkMargin {
  double relu = std::numeric_limits<double>::infinity();
  double pool = std::numeric_limits<double>::infinity();

  double min() const { return std::min(relu, pool); }
};

inline const DenseTensor& lookup(const DenseMap& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw Error(Errc::MissingInput, "dense oracle has no '" + name + "'");
  return it->second;
}

inline void pool_margin(const DenseTensor& x, KinkMargin& margin) {
  const auto n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t r = 0; r + 1 < h; r += 2)
        for (std::int64_t cc = 0; cc + 1 < w; cc += 2) {
          double v[4] = {x({i, ch, r, cc}), x({i, ch, r, cc + 1}), x({i, ch, r + 1, cc}),
                         x({i, ch, r + 1, cc + 1})};
          std::sort(v, v + 4);
          if (v[3] > 0.0) margin.pool = std::min(margin.pool, v[3] - v[2]);
        }
}

/// Labels per row of a one-hot (rows, classes) array; -1 for empty rows.
inline std::vector<std::int64_t> onehot_labels(const DenseTensor& onehot) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(onehot.shape[0]), -1);
  for (std::int64_t i = 0; i < onehot.shape[0]; ++i)
    for (std::int64_t j = 0; j < onehot.shape[1]; ++j)
      if (onehot({i, j}) != 0.0) out[static_cast<std::size_t>(i)] = j;
  return out;
}

/// Runs the layer list up to (not including) the loss. Returns the last
/// activation, which for classifiers is the logits.
inline DenseTensor model_logits(const ModelSpec& spec, const DenseMap& data, const DenseMap& params,
                                KinkMargin* margin = nullptr) {
  DenseTensor x = lookup(data, spec.inputs.at(0).name);
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::conv2d:
        x = conv2d(x, lookup(params, l.weight), lookup(params, l.bias));
        break;
      case LayerKind::relu:
        if (margin) {
          for (double v : x.values) margin->relu = std::min(margin->relu, std::abs(v));
        }
        x = relu(x);
        break;
      case LayerKind::maxpool2x2:
        if (margin) pool_margin(x, *margin);
        x = maxpool2x2(x);
        break;
      case LayerKind::flatten: x = flatten(x); break;
      case LayerKind::fully_connected:
        x = fully_connected(x, lookup(params, l.weight), lookup(params, l.bias));
        break;
      case LayerKind::graph_conv:
        x = graph_conv(lookup(data, l.adjacency), x, lookup(params, l.weight),
                       lookup(params, l.bias));
        break;
      case LayerKind::cross_entropy_loss:
      case LayerKind::argmax_predict: return x;
    }
  }
  return x;
}

/// Scalar loss of a classifier spec.
inline double model_loss(const ModelSpec& spec, const DenseMap& data, const DenseMap& params,
                         KinkMargin* margin = nullptr) {
  const DenseTensor logits = model_logits(spec, data, params, margin);
  for (const auto& l : spec.layers) {
    if (l.kind != LayerKind::cross_entropy_loss) continue;
    const auto labels = onehot_labels(lookup(data, l.labels));
    if (l.loss_weights.empty()) return cross_entropy(logits, labels);
    const DenseTensor& w = lookup(data, l.loss_weights);
    std::vector<double> weights = w.values;
    // Unlabeled rows carry zero weight; point them at class 0.
    std::vector<std::int64_t> safe = labels;
    for (auto& v : safe) v = v < 0 ? 0 : v;
    return cross_entropy(logits, safe, &weights);
  }
  throw Error(Errc::InvalidParams, "model has no loss layer");
}

}  // namespace relml::oracle

#endif  // RELML_ORACLE_MODEL_HPP
