#pragma once

#include <stdexcept>
#include <string>

namespace hdp {

// Base of every error the toolkit raises. Subclasses name the failure kind so
// callers (the CLI in particular) can map them to messages and exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/image extents that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-range or inconsistent parameter.
class ParamError : public Error {
 public:
  using Error::Error;
};

// Non-finite or otherwise invalid numeric input.
class ValueError : public Error {
 public:
  using Error::Error;
};

// Cache/parameter bookkeeping out of sync, or a frozen object was mutated.
class StateError : public Error {
 public:
  using Error::Error;
};

// Training loop aborted (non-finite loss, divergence guard).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace hdp
