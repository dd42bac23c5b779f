#pragma once

#include <stdexcept>
#include <string>

namespace emoshare {

// Base of every error the library raises. `exit_code()` maps onto the CLI
// contract: 2 for bad input/validation, 3 for runtime failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 3; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Missing or misnamed CSV columns.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Sequence longer than the configured maximum, or lengths out of range.
class LengthError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigurationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ArithmeticError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bad magic or version in a binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ExtractionError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace emoshare
