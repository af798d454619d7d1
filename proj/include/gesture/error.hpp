// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gesture {

/// Thrown when a caller breaks an operation's preconditions (bad shapes,
/// out-of-range arguments). Indicates a programming error, not bad data.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed annotation text or XML. `line()` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Segmentation produced no foreground pixels.
class NoHandRegion : public std::runtime_error {
 public:
  NoHandRegion() : std::runtime_error("no hand region") {}
};

/// Filesystem or decode failure while reading data (images, manifests).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { not_a_checkpoint, version_mismatch, truncated, architecture_mismatch, io };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace gesture
