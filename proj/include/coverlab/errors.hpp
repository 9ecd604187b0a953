#pragma once

#include <stdexcept>

namespace coverlab {

// Invalid configuration or precondition violation (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Geometric object does not fit the lattice (ball self-wraps, ball touches box boundary, ...).
class GeometryError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Problem exceeds a size or sample budget (CLI exit code 3).
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical procedure failed to converge or produced an inconsistent result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace coverlab
