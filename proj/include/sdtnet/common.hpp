#pragma once

#include <stdexcept>
#include <string>

namespace sdtnet {

// Error categories mapped to CLI exit codes: config 2, data 3, checkpoint 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sdtnet
