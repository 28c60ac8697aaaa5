#pragma once

#include <stdexcept>

namespace stlstm {

// Base type for everything this library throws on purpose.
class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up. The message names both shapes.
class DimensionError : public Error {
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
  using Error::Error;
};

// A text input could not be parsed; the message carries the line number.
class ParseError : public Error {
  using Error::Error;
};

// Input parsed but is semantically invalid (duplicates, empty sets, ...).
class DataError : public Error {
  using Error::Error;
};

// NaN/Inf encountered, or a numerical verification failed.
class NumericalError : public Error {
  using Error::Error;
};

// Bad command-line usage or configuration.
class UsageError : public Error {
  using Error::Error;
};

}  // namespace stlstm
