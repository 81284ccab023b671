#pragma once

#include <stdexcept>
#include <string>

namespace abandon {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data that violates a documented invariant (bad file, bad sequence).
class ValidationError : public Error {
public:
    using Error::Error;
};

class EmptyDatasetError : public ValidationError {
public:
    EmptyDatasetError() : ValidationError("dataset contains no valid sequences") {}
};

/// Inconsistent parameters or shapes.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An operation that needs both classes (or a non-trivial input) did not get it.
class DegenerateError : public Error {
public:
    using Error::Error;
};

} // namespace abandon
