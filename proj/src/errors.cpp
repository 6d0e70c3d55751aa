#include "riemflow/errors.hpp"

namespace riemflow {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::AntipodalPair: return "AntipodalPair";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::GoalMismatch: return "GoalMismatch";
    case ErrorCode::ManifoldMismatch: return "ManifoldMismatch";
    case ErrorCode::ChartOverflow: return "ChartOverflow";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace riemflow
