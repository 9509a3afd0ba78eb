#pragma once

#include <stdexcept>
#include <string>

namespace nkcme {

/// Tensor or vector dimensions do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A caller supplied an argument outside the operation's domain.
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Non-finite gradient handed to the optimizer.
struct OptimizerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& what, long long step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step(step) {}
  long long step;
};

/// Invalid experiment configuration or command-line usage.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Filesystem or parse failure on external data.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Environment stepped after the episode finished.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace nkcme
