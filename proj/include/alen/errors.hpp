#pragma once

#include <stdexcept>
#include <string>

namespace alen {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand dimensions do not chain or do not match.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A forward or backward pass produced NaN or Inf.
class NumericError : public Error {
public:
    using Error::Error;
};

/// An operation was called out of order (e.g. backward without forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// Caller supplied an invalid argument value.
class InputError : public Error {
public:
    using Error::Error;
};

/// Moment estimation or factorization failed.
class EstimationError : public Error {
public:
    using Error::Error;
};

/// Malformed external file; the message carries the line number.
class ParseError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

/// Raised by the experiment runner; names the failing stage.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace alen
