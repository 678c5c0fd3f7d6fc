#pragma once

#include <stdexcept>
#include <string>

namespace fmpn {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file (CSV row, JSON field, ...). Carries a location hint.
struct ParseError : Error {
    using Error::Error;
};

/// Input is syntactically fine but violates a contract (unknown class,
/// dangling reference, value out of range).
struct ValidationError : Error {
    using Error::Error;
};

/// Bad argument to an operation (empty list, mismatched shapes, label >= K).
struct ArgumentError : Error {
    using Error::Error;
};

/// Tensor/image shape does not meet an operation's requirements.
struct ShapeError : ArgumentError {
    using ArgumentError::ArgumentError;
};

/// Configuration value outside its legal range.
struct ConfigError : Error {
    using Error::Error;
};

/// Landmark configuration too degenerate to fit a transform.
struct SingularError : Error {
    using Error::Error;
};

/// File could not be read, decoded or written.
struct IoError : Error {
    using Error::Error;
};

/// A class is missing the data required to build its mask.
struct CoverageError : Error {
    using Error::Error;
};

/// Class-name mapping between two corpora is incomplete.
struct MappingError : Error {
    using Error::Error;
};

/// Fold planning cannot satisfy its constraints.
struct PlanError : Error {
    using Error::Error;
};

/// Checkpoint or pretrained-weight file incompatible with the model.
struct LoadError : Error {
    using Error::Error;
};

} // namespace fmpn
