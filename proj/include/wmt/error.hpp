#pragma once

// Error taxonomy shared by every module. All failures are reported as typed
// exceptions so callers (and the CLI exit-code mapping) can distinguish
// usage problems, bad data, and numerical aborts.

#include <stdexcept>
#include <string>

namespace wmt {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes or extents that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (flag-level problems map to usage).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad content in otherwise well-formed inputs (duplicate timestamps,
// negative production, misaligned series).
class DataError : public Error {
 public:
  using Error::Error;
};

// Structurally invalid files: wrong magic, unsupported version.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Files whose declared layout disagrees with their payload.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Degenerate statistical situations: zero-variance channels, empty batches.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Command-line invocation problems.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace wmt
