#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rulesim {

/// Invalid or inconsistent configuration (bad key, dt >= tau_m, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input is well-formed but carries no usable signal (zero norm, zero
/// variance, all-zero loss mask, ...).
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A rule was asked to run on a network it does not support.
class UnsupportedConfigurationError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed response-matrix or trace file. line() is 1-based, 0 when the
/// problem is not tied to a line (missing file, truncated content).
class IngestionError : public std::runtime_error {
 public:
  IngestionError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace rulesim
