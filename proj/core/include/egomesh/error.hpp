#pragma once

#include <stdexcept>
#include <string>

namespace egomesh {

/// Base of every error raised by the library. Each subclass maps to one of
/// the failure categories of the public contracts.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Index outside of a table or buffer.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Precondition of an operation violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: bad sizes, divisibility, unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A point or pixel falls outside the 180 degree field of view.
class FieldOfViewError : public Error {
 public:
  using Error::Error;
};

/// Input has no spread (zero norm, zero variance) where one is required.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Malformed user input (image dimensions, sample indices, paths).
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace egomesh
