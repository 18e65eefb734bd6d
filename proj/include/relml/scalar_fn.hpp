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

#ifndef RELML_SCALAR_FN_HPP
#define RELML_SCALAR_FN_HPP

#include <cmath>
#include <string>

#include "relml/error.hpp"

namespace relml {

enum class ScalarKind {
  relu,
  exp,
  log,
  negate,
  add_const,
  mul_const,
  // Derivative helpers used by the backward pass.
  step,        // 1 for x > 0, else 0 (so relu'(0) = 0)
  reciprocal,  // 1 / x
};

/// Element-wise function applied to stored values and to the default alike.
struct ScalarFn {
  ScalarKind kind = ScalarKind::relu;
  double constant = 0.0;

  static ScalarFn relu() { return {ScalarKind::relu, 0.0}; }
  static ScalarFn exp() { return {ScalarKind::exp, 0.0}; }
  static ScalarFn log() { return {ScalarKind::log, 0.0}; }
  static ScalarFn negate() { return {ScalarKind::negate, 0.0}; }
  static ScalarFn add_const(double c) { return {ScalarKind::add_const, c}; }
  static ScalarFn mul_const(double c) { return {ScalarKind::mul_const, c}; }
  static ScalarFn step() { return {ScalarKind::step, 0.0}; }
  static ScalarFn reciprocal() { return {ScalarKind::reciprocal, 0.0}; }

  double operator()(double x) const {
    switch (kind) {
      case ScalarKind::relu: return x > 0.0 ? x : 0.0;
      case ScalarKind::exp: return std::exp(x);
      case ScalarKind::log:
        if (!(x > 0.0)) throw Error(Errc::DomainError, "log of non-positive " + std::to_string(x));
        return std::log(x);
      case ScalarKind::negate: return -x;
      case ScalarKind::add_const: return x + constant;
      case ScalarKind::mul_const: return x * constant;
      case ScalarKind::step: return x > 0.0 ? 1.0 : 0.0;
      case ScalarKind::reciprocal:
        if (x == 0.0) throw Error(Errc::DomainError, "reciprocal of zero");
        return 1.0 / x;
    }
    return x;
  }

  std::string name() const {
    switch (kind) {
      case ScalarKind::relu: return "relu";
      case ScalarKind::exp: return "exp";
      case ScalarKind::log: return "log";
      case ScalarKind::negate: return "negate";
      case ScalarKind::add_const: return "add_const";
      case ScalarKind::mul_const: return "mul_const";
      case ScalarKind::step: return "step";
      case ScalarKind::reciprocal: return "reciprocal";
    }
    return "?";
  }

  friend bool operator==(const ScalarFn&, const ScalarFn&) = default;
};

}  // namespace relml

#endif  // RELML_SCALAR_FN_HPP
