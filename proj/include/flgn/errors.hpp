#pragma once

#include <stdexcept>
#include <string>

namespace flgn {

// Shape or dimension disagreement between operands.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// A completed operation produced NaN/Inf, or a training loss diverged.
// Training loops catch this and abort the run (CLI exit code 4).
struct NumericsError : std::runtime_error {
    explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

// A pipeline command was invoked without its required input artifact,
// or with an artifact from the wrong stage (CLI exit code 3).
struct PreconditionError : std::runtime_error {
    explicit PreconditionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent run configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or malformed checkpoint container: bad magic, version
// mismatch, truncation, or dimension overflow. A broken input artifact is
// a precondition failure, so the CLI maps this to exit code 3 as well.
struct CheckpointError : PreconditionError {
    explicit CheckpointError(const std::string& msg) : PreconditionError(msg) {}
};

}  // namespace flgn
