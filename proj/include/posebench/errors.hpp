#pragma once

#include <stdexcept>
#include <string>

namespace posebench {

// Common base so callers can catch everything the library throws at once.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input violates a mathematical precondition (zero-norm vector, parallel
// columns, non-positive depth, ...).
struct DegenerateInput : Error {
  using Error::Error;
};

// Array arguments whose dimensions do not line up.
struct ShapeMismatch : Error {
  using Error::Error;
};

// A solver could not produce a usable estimate (rank deficiency, no
// consensus set, ...).
struct SolverFailure : Error {
  using Error::Error;
};

// An operation that needs foreground pixels received a mask with none.
struct EmptyMask : Error {
  using Error::Error;
};

// File-level failures: missing paths, short reads, bad magic numbers.
struct IoError : Error {
  using Error::Error;
};

// Malformed or contradictory run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Training produced a non-finite loss.
struct Divergence : Error {
  using Error::Error;
};

}  // namespace posebench
