#pragma once

#include <stdexcept>
#include <string>

namespace fmrlrec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar or list argument is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Index (label, item id, size) out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an API precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Layer or run configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data is semantically invalid (empty after filtering, row mismatch).
class DataError : public Error {
 public:
  using Error::Error;
};

/// On-disk bytes do not match the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf where a finite value is required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace fmrlrec
