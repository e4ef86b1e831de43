#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bpseg {

enum class ErrorCode {
  kInvalidArgument,
  kImageTooSmall,
  kDegeneratePolygon,
  kCropTooLarge,
  kTileTooSmall,
  kEmptyInput,
  kInvalidConfig,
  kShapeMismatch,
  kNonFiniteActivation,
  kNonFiniteGradient,
  kNonPositiveBaseline,
  kTooFewSamples,
  kMissingRaterMask,
  kConfigError,
  kIoError,
  kParseError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace bpseg
