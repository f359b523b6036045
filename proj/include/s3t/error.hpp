#pragma once

#include <stdexcept>
#include <string>

namespace s3t {

// Every failure raised by the library derives from Error. The subclass tells
// the CLI which exit code to use.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN, non-positive-definite matrices and similar numerical breakdowns.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters or option combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. calling backward on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Bad input data: out-of-range events, flat channels, missing classes.
class DataError : public Error {
 public:
  using Error::Error;
};

class SegmentationError : public DataError {
 public:
  using DataError::DataError;
};

// Wrong magic string or version in a file header.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Structurally broken payload (truncated, trailing bytes, bad counts).
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace s3t
