#pragma once

#include <stdexcept>
#include <string>

namespace guq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition of the call was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, singular factors, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dataset and checkpoint disagree (dims, kinds, versions).
class DataMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace guq
