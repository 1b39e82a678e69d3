#pragma once

#include <stdexcept>
#include <string>

namespace trafficshape {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller supplied a value that violates an operation's preconditions
// (non-square matrix, negative price, dimension mismatch, ...).
struct InvalidInputError : Error {
  using Error::Error;
};

// An exhaustive operation was asked to run beyond its hard size guard.
struct SizeLimitError : Error {
  using Error::Error;
};

// A file exists and was readable but its contents do not match the expected
// schema. The message names the offending line and field.
struct SchemaError : Error {
  using Error::Error;
};

// Filesystem-level failure (missing file, unwritable path, ...).
struct IoError : Error {
  using Error::Error;
};

}  // namespace trafficshape
