#include "traitsteer/error.hpp"

namespace traitsteer {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kUnknownSymbol: return "unknown_symbol";
    case ErrorCode::kSequenceTooLong: return "sequence_too_long";
    case ErrorCode::kLayerOutOfRange: return "layer_out_of_range";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kMultiTokenOption: return "multi_token_option";
    case ErrorCode::kIndexOutOfRange: return "index_out_of_range";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kZeroDifference: return "zero_difference";
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kNormViolation: return "norm_violation";
    case ErrorCode::kIncompatibleVersion: return "incompatible_version";
    case ErrorCode::kNoAdmissibleCoefficient: return "no_admissible_coefficient";
    case ErrorCode::kMissingFactor: return "missing_factor";
    case ErrorCode::kMissingDirection: return "missing_direction";
    case ErrorCode::kDigestMismatch: return "digest_mismatch";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace traitsteer
