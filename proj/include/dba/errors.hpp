#pragma once

#include <stdexcept>
#include <string>

namespace dba {

// Bad user input: malformed config, unreadable or mismatched files.
// The CLI maps this (and std::invalid_argument) to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or degenerate statistics encountered mid-computation.
// The CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dba
