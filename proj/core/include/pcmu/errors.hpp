#pragma once

#include <stdexcept>
#include <string>

namespace pcmu {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value (out-of-range field, malformed config file).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unusable input data: unparseable rows, missing files, too few days.
class DataError : public Error {
 public:
  using Error::Error;
};

/// An action violates a battery or grid constraint.
class ConstraintError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Tensor dimensions do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given input (e.g. single-class labels).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace pcmu
