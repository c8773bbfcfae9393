#pragma once

#include <stdexcept>
#include <string>

namespace ccs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or model dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Token or row index outside the valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or configuration combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a contract (empty article, unknown label, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed corpus record. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Numerical failure during optimization (NaN loss, non-finite gradient).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. calling backward() on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint could not be read back.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace ccs
