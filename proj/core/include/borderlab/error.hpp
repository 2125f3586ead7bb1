#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace borderlab {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter or value violates a documented invariant.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text (CSV, config). Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Regressor matrix is rank deficient; `column()` is the first offending column.
class CollinearityError : public Error {
 public:
  CollinearityError(const std::string& what, std::size_t column)
      : Error(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Logistic fit diverged because the classes are (quasi-)separable.
class SeparationError : public Error {
 public:
  using Error::Error;
};

/// The data cannot identify the requested estimate (empty cohort, no variation, ...).
class DegenerateDesignError : public Error {
 public:
  using Error::Error;
};

}  // namespace borderlab
