#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmmmix {

enum class ErrorCode {
  // data
  UnknownColumn,
  MissingColumn,
  OutOfRangeLevel,
  MissingFixedValue,
  NonNumericContinuous,
  UnresolvedMissing,
  InvalidSchema,
  InvalidDesign,
  Io,
  // gower
  ZeroRange,
  InvalidDistanceSpec,
  // infosel
  InvalidThreshold,
  // model
  InvalidHyperpriors,
  InitFailure,
  // sampler
  SingularPrecision,
  NonPDScale,
  EmptyNeighborhood,
  EmptyInterval,
  TruncationUnderflow,
  InvalidChainConfig,
  // query
  TooFewDraws,
  InvalidQuery,
  // fusion
  TooFewRows,
  NoDonor,
  InvalidStudyConfig,
  // cli
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cmmmix
