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

#ifndef RELML_ERROR_HPP
#define RELML_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace relml {

enum class Errc {
  SchemaMismatch,
  InvalidSchema,
  NonzeroDefaults,
  Collision,
  OutOfDomain,
  EmptyRange,
  DefaultConflict,
  DivisorInvalid,
  DomainError,
  TooLarge,
  NonAffineExpr,
  NonCanonical,
  DuplicateIndex,
  OddExtent,
  ShapeChainError,
  NotSquare,
  NotBinary,
  UnboundInput,
  UnboundTarget,
  UnsupportedGradient,
  UnsupportedNode,
  NonFiniteLoss,
  InvalidParams,
  MissingInput,
  ParseError,
};

constexpr std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::InvalidSchema: return "InvalidSchema";
    case Errc::NonzeroDefaults: return "NonzeroDefaults";
    case Errc::Collision: return "Collision";
    case Errc::OutOfDomain: return "OutOfDomain";
    case Errc::EmptyRange: return "EmptyRange";
    case Errc::DefaultConflict: return "DefaultConflict";
    case Errc::DivisorInvalid: return "DivisorInvalid";
    case Errc::DomainError: return "DomainError";
    case Errc::TooLarge: return "TooLarge";
    case Errc::NonAffineExpr: return "NonAffineExpr";
    case Errc::NonCanonical: return "NonCanonical";
    case Errc::DuplicateIndex: return "DuplicateIndex";
    case Errc::OddExtent: return "OddExtent";
    case Errc::ShapeChainError: return "ShapeChainError";
    case Errc::NotSquare: return "NotSquare";
    case Errc::NotBinary: return "NotBinary";
    case Errc::UnboundInput: return "UnboundInput";
    case Errc::UnboundTarget: return "UnboundTarget";
    case Errc::UnsupportedGradient: return "UnsupportedGradient";
    case Errc::UnsupportedNode: return "UnsupportedNode";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::InvalidParams: return "InvalidParams";
    case Errc::MissingInput: return "MissingInput";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library. `what()` is a single line of the
/// form "<Code>: <detail>", which the CLI forwards verbatim to stderr.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace relml

#endif  // RELML_ERROR_HPP
