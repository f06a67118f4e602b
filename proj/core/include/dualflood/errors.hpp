#pragma once

#include <stdexcept>
#include <string>

namespace dualflood {

/// Bad or inconsistent run configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unreadable, corrupt or schema-incompatible data (CLI exit code 3).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values showed up during optimization (CLI exit code 4).
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dualflood
