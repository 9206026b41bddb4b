#pragma once

#include <stdexcept>
#include <string>

namespace xkit {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Arguments are individually valid but inconsistent with each other.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

class SimulationError : public Error {
 public:
  using Error::Error;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input/output data.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Requested combination has no implemented closed form or algorithm.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// A root-finding problem has no solution on the searched branch.
class NoSolutionError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace xkit
