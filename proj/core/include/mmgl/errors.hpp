#pragma once

#include <stdexcept>
#include <string>

namespace mmgl {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A hyper-parameter or argument is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input data violates the dataset contract (labels, ids, schema).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries row/column context in the message.
class ParseError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values or degenerate numerics (zero norms, NaN gradients).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A caller-side contract was violated (e.g. non-deterministic loss).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmgl
