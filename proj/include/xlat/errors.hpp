#pragma once

#include <stdexcept>
#include <string>

namespace xlat {

// Base for everything thrown by this library, so callers (notably the CLI)
// can catch one type and turn it into a one-line diagnostic.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid RunConfig / ShapesSpec / dataset setup.
struct ConfigError : Error {
  using Error::Error;
};

// Violated API precondition: shape mismatch, empty batch, wrong mode.
struct ContractError : Error {
  using Error::Error;
};

// Label or index outside its valid range.
struct DomainError : Error {
  using Error::Error;
};

// Bad input data: non-finite pixels, missing tensors in a checkpoint.
struct DataError : Error {
  using Error::Error;
};

// Non-finite loss or gradient during optimization.
struct NumericError : Error {
  using Error::Error;
};

// Checkpoint deserialization failure (names the offending tensor).
struct LoadError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace xlat
