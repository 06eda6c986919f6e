#include "svyexp/error.hpp"

namespace svyexp {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::kNonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::kDegenerateArm: return "DegenerateArm";
    case ErrorCode::kMissingValue: return "MissingValue";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kInvalidPopulation: return "InvalidPopulation";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kSampleTooLarge: return "SampleTooLarge";
    case ErrorCode::kTooManyStrata: return "TooManyStrata";
    case ErrorCode::kEmptyStratumArm: return "EmptyStratumArm";
    case ErrorCode::kArmTooSmall: return "ArmTooSmall";
    case ErrorCode::kOracleDataMissing: return "OracleDataMissing";
    case ErrorCode::kInvalidInterval: return "InvalidInterval";
    case ErrorCode::kZeroVariance: return "ZeroVariance";
    case ErrorCode::kTooFew: return "TooFew";
    case ErrorCode::kTooManyDegenerateReplicates: return "TooManyDegenerateReplicates";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kConfig: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace svyexp
