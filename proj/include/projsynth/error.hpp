#pragma once

#include <stdexcept>
#include <string>

namespace projsynth {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image shapes do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument lies outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// An architecture, loss, or pipeline configuration is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Projection geometry is physically degenerate.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API contract (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A file is missing, unreadable, or does not match what was expected.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Stored checksum does not match the payload.
class IntegrityError : public LoadError {
 public:
  using LoadError::LoadError;
};

/// NaN/Inf encountered during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A metric has no finite value for the given input (e.g. PSNR at MSE 0).
class UndefinedValueError : public Error {
 public:
  using Error::Error;
};

}  // namespace projsynth
