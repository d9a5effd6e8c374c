#pragma once

#include <stdexcept>
#include <string>

namespace esm {

enum class ErrorCode {
    InvalidArgument,
    ParseError,
    InvalidMaze,
    LimitExceeded,
    CollisionOnRollout,
    OutsideWorld,
    ShapeMismatch,
    NonMonotonicTime,
    EmptyResult,
    MissingHistory,
    DegenerateInput,
    EmptyGroundTruth,
    ConfigError,
    IoError,
};

const char* to_string(ErrorCode code);

// All recoverable failures of the core are reported through this type.
// `step` carries the offending step / line index when one applies, else -1.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what, long step = -1)
        : std::runtime_error(what), code_(code), step_(step) {}

    ErrorCode code() const noexcept { return code_; }
    long step() const noexcept { return step_; }

private:
    ErrorCode code_;
    long step_;
};

}  // namespace esm
