#pragma once

#include <stdexcept>
#include <string>

namespace lfr {

/// Tensor shape / dimension mismatches.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse: backward without a tape, non-scalar loss, etc.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration (bad JSON, unknown keys, out-of-range values).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset problems: unreadable files, malformed rows, label issues.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failures: NaN losses, NaN gradients, degenerate signatures.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A projector whose probe-batch output is identically zero; the candidate
/// carries no behavioral information and is discarded by the caller.
class DegenerateSignatureError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace lfr
