#pragma once

#include <stdexcept>
#include <string>

namespace advnet {

// Shape / index violations in tensor ops and layers.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IndexError : std::runtime_error {
  explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

// Backward before forward, double-backward, etc.
struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input files (IDX, checkpoints).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Distinct checkpoint failure modes so callers can tell them apart.
struct CrcError : FormatError {
  explicit CrcError(const std::string& msg) : FormatError(msg) {}
};

struct VersionError : FormatError {
  explicit VersionError(const std::string& msg) : FormatError(msg) {}
};

struct TruncationError : FormatError {
  explicit TruncationError(const std::string& msg) : FormatError(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AttackError : std::runtime_error {
  explicit AttackError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace advnet
