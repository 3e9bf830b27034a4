#include "hexreg/error.hpp"

namespace hexreg {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::BadGraph: return "BadGraph";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::BadSchedule: return "BadSchedule";
    case ErrorCode::BadTemperature: return "BadTemperature";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::TauOne: return "TauOne";
    case ErrorCode::EmptyH: return "EmptyH";
    case ErrorCode::NonPositiveDenominator: return "NonPositiveDenominator";
    case ErrorCode::EmptyQueue: return "EmptyQueue";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::BadAlpha: return "BadAlpha";
    case ErrorCode::ZeroMatrix: return "ZeroMatrix";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::BadK: return "BadK";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::Usage: return "Usage";
  }
  return "Unknown";
}

int exit_code(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Usage:
    case ErrorCode::BadConfig:
      return 1;
    case ErrorCode::MissingLabels:
    case ErrorCode::BadParams:
    case ErrorCode::IoError:
    case ErrorCode::SchemaError:
    case ErrorCode::VersionMismatch:
    case ErrorCode::InsufficientSamples:
    case ErrorCode::EmptyTrainSet:
    case ErrorCode::BadDims:
    case ErrorCode::BadK:
    case ErrorCode::ShapeMismatch:
      return 2;
    default:
      return 3;
  }
}

}  // namespace hexreg
