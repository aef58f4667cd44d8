#pragma once

#include <stdexcept>
#include <string>

namespace fragility {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or input data. The CLI maps it to exit code 2.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Quadrature, optimizer or sampler produced a non-finite or unusable result.
/// The CLI maps it to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// No unused candidate or signal is left to select.
class ExhaustionError : public DomainError {
 public:
  using DomainError::DomainError;
};

}  // namespace fragility
