#pragma once

#include <stdexcept>
#include <string>

namespace cgnn {

// Error taxonomy mirrors the CLI exit codes:
//   ConfigError -> 1, DataError/ContractError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad usage, malformed or invalid configuration (graph specs, configs, flags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Data files or artifacts that do not match their declared contract.
class DataError : public Error {
 public:
  using Error::Error;
};

// API preconditions violated by calling code (shape mismatch, bad arguments).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

// NaN/Inf escaped a numeric kernel, or an iterate diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace cgnn
