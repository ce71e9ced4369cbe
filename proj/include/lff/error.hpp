#pragma once

#include <stdexcept>
#include <string>

namespace lff {

/// Base of all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: shape mismatch, invalid configuration, violated precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed or incompatible on-disk data (manifests, checkpoints, images).
class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// NaN or Inf produced by a computation.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace lff
