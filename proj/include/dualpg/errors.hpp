#pragma once

#include <stdexcept>
#include <string>

namespace dualpg {

/// Node/edge kinds do not fit together, or an edge references a missing node.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Some free variables are not anchored by a fixed node or a prior.
class GaugeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejected configuration values (exit code 2 in the CLI).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input streams (exit code 3 in the CLI).
class InputError : public std::runtime_error {
 public:
  InputError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Too few or degenerate correspondences for an alignment.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dualpg
