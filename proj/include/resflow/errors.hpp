#pragma once

#include <stdexcept>
#include <string>

namespace resflow {

// Error taxonomy. The CLI maps these onto process exit codes:
// usage/config -> 1, data -> 2, numerical -> 3.

// Invalid configuration: bad model topology, dimension mismatches,
// malformed config files.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Misuse of a library call (wrong argument shape, empty input, ...).
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// Problems with dataset or checkpoint files.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure during training or evaluation (NaN loss, failed
// gradient verification).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A metric whose value is undefined on the given input (single-class AUC,
// zero total weight, zero variance).
class UndefinedMetricError : public std::runtime_error {
 public:
  explicit UndefinedMetricError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace resflow
