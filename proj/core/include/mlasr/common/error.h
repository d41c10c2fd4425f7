#pragma once

#include <stdexcept>
#include <string>

namespace mlasr {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes incompatible with a primitive or layer contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or infinity where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable file.
class IoError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation precondition.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace mlasr
