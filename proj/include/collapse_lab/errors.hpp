#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace collapse_lab {

/// Base for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSpec : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Second moment of the inputs is numerically zero.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// A data-dependent encoder standard deviation hit zero on some sample.
class DegenerateVariance : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset file. Row and column are 1-based; 0 means "not applicable".
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : Error(what + " (row " + std::to_string(row) + ", column " + std::to_string(column) + ")"),
        row_(row),
        column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace collapse_lab
