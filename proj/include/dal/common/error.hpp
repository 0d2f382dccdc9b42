#pragma once

#include <stdexcept>
#include <string>

namespace dal {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes; the message names the op and the shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or version-mismatched file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid or unknown configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values detected during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dal
