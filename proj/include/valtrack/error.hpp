#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace valtrack {

// Base of every error thrown by the library. The CLI maps ConfigError to exit
// code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite or out-of-range argument to a numeric primitive.
class InvalidInput : public Error {
public:
    using Error::Error;
};

// Argument outside the mathematical domain (log of a non-positive value, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Malformed, unknown or out-of-range configuration entry.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Iterative solver failed to converge.
class NumericError : public Error {
public:
    using Error::Error;
};

// Reduced-coordinate map evaluated on the discontinuity set (pi = 0 or m = 0).
class BoundaryError : public DomainError {
public:
    using DomainError::DomainError;
};

// Holdings cannot be reconstructed on the back-diagonal.
class DegenerateError : public DomainError {
public:
    using DomainError::DomainError;
};

// A documented precondition of a function was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require_finite(double x, const char* what)
{
    if (!std::isfinite(x))
        throw InvalidInput(std::string(what) + " must be finite");
}

} // namespace detail

} // namespace valtrack
