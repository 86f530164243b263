#pragma once

#include <stdexcept>
#include <string>

namespace prefield {

/// Base class for all errors thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid input data (schema violations, short tracks, bad coordinates). CLI exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A point fell outside the triangulated hull of a mesh.
class OutOfHullError : public DataError {
 public:
  using DataError::DataError;
};

/// Numerical failure: non-SPD matrices, non-finite objectives, exhausted damping. CLI exit code 4.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace prefield
