// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace decoquant {

enum class ErrorCode {
  kShapeMismatch,
  kSizeMismatch,
  kInvalidPermutation,
  kNoConvergence,
  kNonFiniteInput,
  kUnsupportedBits,
  kCorruptPayload,
  kRangeOverflow,
  kBondMismatch,
  kLayerOutOfRange,
  kAlreadyPrefilled,
  kDimMismatch,
  kEmptyInput,
  kInvalidArgument,
  kMalformedFile,
  kInvariantViolation,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kInvalidPermutation: return "InvalidPermutation";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kUnsupportedBits: return "UnsupportedBits";
    case ErrorCode::kCorruptPayload: return "CorruptPayload";
    case ErrorCode::kRangeOverflow: return "RangeOverflow";
    case ErrorCode::kBondMismatch: return "BondMismatch";
    case ErrorCode::kLayerOutOfRange: return "LayerOutOfRange";
    case ErrorCode::kAlreadyPrefilled: return "AlreadyPrefilled";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMalformedFile: return "MalformedFile";
    case ErrorCode::kInvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace decoquant
