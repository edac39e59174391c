#pragma once

#include <stdexcept>
#include <string>

namespace traitsteer {

enum class ErrorCode {
  kInvalidArgument,
  kEmptyInput,
  kUnknownSymbol,
  kSequenceTooLong,
  kLayerOutOfRange,
  kDimensionMismatch,
  kMultiTokenOption,
  kIndexOutOfRange,
  kDivergence,
  kZeroDifference,
  kSchema,
  kNormViolation,
  kIncompatibleVersion,
  kNoAdmissibleCoefficient,
  kMissingFactor,
  kMissingDirection,
  kDigestMismatch,
  kIo,
};

/// Stable snake_case name, used in the CLI's machine-readable error output.
const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace traitsteer
