#pragma once

#include <stdexcept>
#include <string>

namespace psnet {

// Error taxonomy. The CLI maps these onto exit codes:
// ConfigError/SizeError -> 2, DataError/FormatError/IoError -> 3, anything else -> 1.

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Refusal to run a gradient check whose parameter count is too large.
struct SizeError : ConfigError {
  using ConfigError::ConfigError;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : DataError {
  using DataError::DataError;
};

struct IoError : DataError {
  using DataError::DataError;
};

} // namespace psnet
