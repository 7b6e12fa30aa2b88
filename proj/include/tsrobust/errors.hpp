#pragma once

#include <stdexcept>
#include <string>

namespace tsrobust {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape / dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration values (hyperparameters, sizes, temperatures).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input files (TSV rows, checkpoints, run configs).
struct FormatError : Error {
  using Error::Error;
};

// Misuse of the recording graph (stale backward, cross-graph ops).
struct GraphError : Error {
  using Error::Error;
};

// Attack failures (non-finite gradients or objectives).
struct AttackError : Error {
  using Error::Error;
};

// Dataset contract violations (bad labels, non-finite values).
struct DataError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace tsrobust
