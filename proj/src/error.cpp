#include "esm/error.hpp"

namespace esm {

const char* to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidMaze: return "InvalidMaze";
    case ErrorCode::LimitExceeded: return "LimitExceeded";
    case ErrorCode::CollisionOnRollout: return "CollisionOnRollout";
    case ErrorCode::OutsideWorld: return "OutsideWorld";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::MissingHistory: return "MissingHistory";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace esm
