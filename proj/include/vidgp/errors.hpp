#pragma once

#include <stdexcept>
#include <string>

namespace vidgp {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input outside the domain contract (location outside the unit square, bad shape, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Mismatched vector/field/parameter shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed file content; message names the offending token or line.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Factorization or evaluation produced non-finite or indefinite results.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Iterative or direct solve failed to reach the requested tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& msg, double achieved_residual)
        : Error(msg), residual(achieved_residual) {}
    double residual;
};

/// Filesystem problems (missing file, unwritable directory).
class IoError : public Error {
public:
    using Error::Error;
};

/// Bad configuration key or value.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace vidgp
