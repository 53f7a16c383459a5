#pragma once

#include <stdexcept>
#include <string>

namespace esslam {

// Invalid configuration or incompatible options. Mapped to exit status 2 by the CLI.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace esslam
