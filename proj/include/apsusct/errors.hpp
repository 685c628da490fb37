#pragma once

#include <stdexcept>
#include <string>

namespace apsusct {

/// Invalid shapes, hyperparameters, geometry, or configuration files.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error("configuration error: " + what) {}
};

/// Operation invoked in the wrong order (backward before forward, stale gradients, ...).
class StateError : public std::runtime_error {
 public:
  explicit StateError(const std::string& what) : std::runtime_error("state error: " + what) {}
};

/// Non-finite values produced during a computation.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error("numeric error: " + what) {}
};

/// Inconsistent or corrupt input data.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error("data error: " + what) {}
};

}  // namespace apsusct
