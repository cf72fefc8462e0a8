#pragma once

#include <stdexcept>
#include <string>

namespace msan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A scalar or enum argument is outside its allowed range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (empty class, missing partner, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. `offset` is the byte or line position, if known.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, long long offset = -1) : Error(what), offset_(offset) {}
  long long offset() const noexcept { return offset_; }

 private:
  long long offset_;
};

/// Electrode layout problems, including channels missing from a layout.
class LayoutError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace msan
