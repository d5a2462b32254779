#pragma once

#include <stdexcept>
#include <string>

namespace wmevade {

// Error categories surfaced by the library. All derive from Error so callers
// can catch broadly or per category.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct LabelError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

struct ConsistencyError : Error {
    using Error::Error;
};

struct InfeasibleError : Error {
    using Error::Error;
};

struct ArgumentError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Raised when a QueryOracle throws during verification.
struct VerificationAborted : Error {
    using Error::Error;
};

}  // namespace wmevade
