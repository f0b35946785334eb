#include "cmmmix/error.hpp"

namespace cmmmix {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::OutOfRangeLevel: return "OutOfRangeLevel";
    case ErrorCode::MissingFixedValue: return "MissingFixedValue";
    case ErrorCode::NonNumericContinuous: return "NonNumericContinuous";
    case ErrorCode::UnresolvedMissing: return "UnresolvedMissing";
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::InvalidDesign: return "InvalidDesign";
    case ErrorCode::Io: return "Io";
    case ErrorCode::ZeroRange: return "ZeroRange";
    case ErrorCode::InvalidDistanceSpec: return "InvalidDistanceSpec";
    case ErrorCode::InvalidThreshold: return "InvalidThreshold";
    case ErrorCode::InvalidHyperpriors: return "InvalidHyperpriors";
    case ErrorCode::InitFailure: return "InitFailure";
    case ErrorCode::SingularPrecision: return "SingularPrecision";
    case ErrorCode::NonPDScale: return "NonPDScale";
    case ErrorCode::EmptyNeighborhood: return "EmptyNeighborhood";
    case ErrorCode::EmptyInterval: return "EmptyInterval";
    case ErrorCode::TruncationUnderflow: return "TruncationUnderflow";
    case ErrorCode::InvalidChainConfig: return "InvalidChainConfig";
    case ErrorCode::TooFewDraws: return "TooFewDraws";
    case ErrorCode::InvalidQuery: return "InvalidQuery";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::NoDonor: return "NoDonor";
    case ErrorCode::InvalidStudyConfig: return "InvalidStudyConfig";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace cmmmix
