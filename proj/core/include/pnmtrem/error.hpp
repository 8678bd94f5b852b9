#pragma once

#include <stdexcept>
#include <string>

namespace pnmtrem {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: unbalanced panels, bad responses, spec/column mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid arguments or non-finite intermediate values.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver failed to reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace pnmtrem
