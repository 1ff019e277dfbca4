#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace weakal {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Raised when a Cholesky pivot is not strictly positive. Usually means the
/// jitter is missing or a noise term is invalid.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(std::size_t pivot, double value)
      : Error("matrix is not positive definite (pivot " + std::to_string(pivot) +
              " = " + std::to_string(value) + ")"),
        pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : Error("row " + std::to_string(row) + ", column " + std::to_string(column) + ": " +
              what),
        row_(row),
        column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class EmptyFile : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, std::size_t line, std::string reason)
      : Error("config error at line " + std::to_string(line) + " (" + key + "): " + reason),
        key_(std::move(key)),
        line_(line),
        reason_(std::move(reason)) {}

  const std::string& key() const noexcept { return key_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string key_;
  std::size_t line_;
  std::string reason_;
};

class PoolTooSmall : public Error {
 public:
  using Error::Error;
};

class EmptyTestSet : public Error {
 public:
  using Error::Error;
};

class UnknownPoint : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class DegenerateRange : public Error {
 public:
  using Error::Error;
};

}  // namespace weakal
