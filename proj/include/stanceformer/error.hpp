#pragma once

#include <stdexcept>
#include <string>

namespace stanceformer {

// Every failure raised by the library derives from Error so callers (the CLI in
// particular) can map it to a nonzero exit without catching std::exception.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not compose.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where only finite values are legal.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset content, labels out of range, oversize targets.
class DataError : public Error {
 public:
  using Error::Error;
};

// Bad configuration keys or values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. stepping an optimizer before gradients exist.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace stanceformer
