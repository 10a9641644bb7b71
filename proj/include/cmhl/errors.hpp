#pragma once

#include <stdexcept>
#include <string>

namespace cmhl {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, int last_good_epoch)
      : NumericError(what), last_good_epoch_(last_good_epoch) {}
  int last_good_epoch() const { return last_good_epoch_; }

 private:
  int last_good_epoch_;
};

class DeterminismError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unusable input data (corpus lines, checkpoint files).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint and corpus disagree on vocabulary or label schema.
class CompatibilityError : public DataError {
 public:
  using DataError::DataError;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace cmhl
