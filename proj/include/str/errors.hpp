#pragma once

#include <stdexcept>
#include <string>

namespace str {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes passed to a numerical routine.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid model or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Problem with the input series or covariates.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Base class for failures of the numerical machinery (exit status 4 in the CLI).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// X'X is singular to working precision; usually a smoothing parameter is zero or too small.
class RankDeficientError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A leverage reached one, so the leave-one-out residual is undefined.
class SaturationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace str
