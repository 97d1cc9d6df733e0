#pragma once

#include <stdexcept>
#include <string>

namespace nsfold {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A user-supplied setting is invalid (N does not divide t, lambda < 0, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An object was used out of order, e.g. backward before forward.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A file does not follow its expected binary layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure: missing path, unwritable directory, short read.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: non-finite loss, failed self-check of a constructed point.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace nsfold
