#pragma once

#include <stdexcept>
#include <string>

namespace pixeltag {

// Root of every error the engine raises. Data-side failures derive from
// DataError so the CLI can map them to a single exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};
class FormatError : public DataError {
 public:
  using DataError::DataError;
};
class TruncationError : public DataError {
 public:
  using DataError::DataError;
};
class ValidationError : public DataError {
 public:
  using DataError::DataError;
};
class ParseError : public DataError {
 public:
  using DataError::DataError;
};
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};
class DegenerateVectorError : public DataError {
 public:
  using DataError::DataError;
};
class EmptyInputError : public DataError {
 public:
  using DataError::DataError;
};
class ContractError : public DataError {
 public:
  using DataError::DataError;
};
class DivergenceError : public DataError {
 public:
  using DataError::DataError;
};

// Invalid user configuration (flags, hyperparameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace pixeltag
