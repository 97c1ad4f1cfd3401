#pragma once

#include <stdexcept>
#include <string>

namespace fedmarket {

// Bad user input: unknown strategy, malformed config, nonsense rates.
// Fail fast with a message the operator can act on.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated structural precondition (cyclic pipeline, disconnected partition
// class, ...). These indicate a caller bug, not an operator mistake.
struct StructuralError : std::logic_error {
  explicit StructuralError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace fedmarket
