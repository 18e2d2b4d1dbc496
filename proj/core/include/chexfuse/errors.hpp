#pragma once

#include <stdexcept>
#include <string>

namespace chexfuse {

/// Tensor shape / dimension violations (mismatched operands, bad windows).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Manifest rows, label tokens, metadata values or CLI inputs that fail
/// validation.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or unknown configuration keys/values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failures; message carries the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset cannot be split (e.g. fewer than 3 distinct patients).
class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite gradient reached the optimizer; message names the parameter.
class OptimizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training aborted (non-finite loss); message carries epoch/batch index.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Truncated file, bad magic, or inconsistent tensor directory.
class CheckpointCorruptError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Well-formed file with a format_version this build does not support.
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// AUROC undefined: the scored set lacks a positive or a negative.
class UndefinedAurocError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chexfuse
