#pragma once

#include <stdexcept>
#include <string>

namespace taskbalance {

// Invalid user input: bad specs, shape mismatches, impossible splits.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// An operation was called without the state it needs (e.g. missing loss history).
class StateError : public std::runtime_error {
 public:
  explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf showed up where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Argument outside the mathematical domain of the function.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Evaluation would overflow a double; carries the offending argument and scale.
class OverflowError : public std::runtime_error {
 public:
  OverflowError(const std::string& what, double argument, double scale)
      : std::runtime_error(what + " (z=" + std::to_string(argument) +
                           ", T=" + std::to_string(scale) + ")"),
        argument_(argument),
        scale_(scale) {}
  double argument() const { return argument_; }
  double scale() const { return scale_; }

 private:
  double argument_;
  double scale_;
};

// Inconsistent configuration (e.g. MGDA on a model with no shared parameters).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace taskbalance
