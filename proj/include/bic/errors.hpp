#pragma once

#include <stdexcept>
#include <string>

namespace bic {

/// Base for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension mismatch between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid scalar or index argument.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Non-finite value met during optimization.
class NumericError : public Error {
public:
    using Error::Error;
};

/// API called in the wrong order (e.g. backward without forward).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Data set contents violate a precondition.
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure; message carries the path.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace bic
