#pragma once

#include <stdexcept>
#include <string>

namespace svf {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a contract (ordering, positivity, schema).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed input while parsing a file; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, long line)
      : DataError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  long line() const noexcept { return line_; }

 private:
  long line_;
};

/// Too few observations to compute the requested statistic.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// A variance estimate needed for studentization is zero or negative.
class DegenerateVarianceError : public Error {
 public:
  using Error::Error;
};

}  // namespace svf
