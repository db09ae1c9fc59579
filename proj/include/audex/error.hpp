#pragma once

#include <stdexcept>
#include <string>

namespace audex {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto exit codes, so new error kinds should derive from one of
// DataError, ConfigError or DivergenceError.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user configuration (bad option values, missing paths).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Anything wrong with input data or with arguments derived from it.
class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class LengthError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

// A request needs more members than a class or pool can provide.
class CapacityError : public DataError {
 public:
  using DataError::DataError;
};

// Zero-range boxes, all-duplicate affinity rows and similar.
class DegenerateError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values produced during an iterative optimization.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int iteration)
      : Error(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace audex
