// SPDX-License-Identifier: Apache-2.0
//
// Error categories surfaced to the command line as distinct exit codes.
// Precondition violations inside the library throw std::invalid_argument.

#pragma once

#include <stdexcept>
#include <string>

namespace kaizen {

// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, unreadable or inconsistent dataset / artifact files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during training (non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kaizen
