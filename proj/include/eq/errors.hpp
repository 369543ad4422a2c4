#pragma once

#include <stdexcept>
#include <string>

namespace eq {

// Invalid configuration values (non-finite parameters, bad shapes, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Caller broke a documented precondition (length mismatch, bad shape, ...).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// A requested operating point cannot be reached; the message names the gap.
struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

// Training failed (divergence, all seeds diverged, ...).
struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

// Config document violates the schema; the message carries the key path.
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace eq
