#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace svyexp {

enum class ErrorCode {
  kNonPositiveWeight,
  kNonBinaryTreatment,
  kDegenerateArm,
  kMissingValue,
  kLengthMismatch,
  kEmptyInput,
  kInvalidPopulation,
  kInvalidArgument,
  kSampleTooLarge,
  kTooManyStrata,
  kEmptyStratumArm,
  kArmTooSmall,
  kOracleDataMissing,
  kInvalidInterval,
  kZeroVariance,
  kTooFew,
  kTooManyDegenerateReplicates,
  kParse,
  kIo,
  kConfig,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for every failure the library reports; the code
// carries the category so callers (the CLI in particular) can map it to an
// exit status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace svyexp
