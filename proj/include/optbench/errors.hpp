#pragma once

#include <stdexcept>
#include <string>

namespace optbench {

// Error categories map onto the CLI exit codes: configuration problems exit 1,
// bad or unreadable data exits 2, numerical failure exits 3.

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes. Treated as a configuration problem.
class DimensionError : public ConfigError {
  public:
    using ConfigError::ConfigError;
};

/// Operation called in the wrong lifecycle state (e.g. backward before forward).
class StateError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class FormatError : public DataError {
  public:
    using DataError::DataError;
};

class TruncationError : public DataError {
  public:
    using DataError::DataError;
};

class ParseError : public DataError {
  public:
    using DataError::DataError;
};

class IoError : public DataError {
  public:
    using DataError::DataError;
};

class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace optbench
