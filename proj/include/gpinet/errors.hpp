#pragma once

#include <stdexcept>
#include <string>

namespace gpinet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input is too small or too singular for the requested operation.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Points are collinear/coincident, so a rigid fit is not unique.
class DegenerateGeometryError : public DegenerateInputError {
 public:
  using DegenerateInputError::DegenerateInputError;
};

/// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (bad flag values, inconsistent widths, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Eval-mode normalization requested before running statistics exist.
class UninitializedStatsError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared where finite values are required.
class NumericFault : public Error {
 public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public NumericFault {
 public:
  using NumericFault::NumericFault;
};

/// Malformed file contents.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpinet
