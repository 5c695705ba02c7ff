#pragma once

#include <stdexcept>
#include <string>

namespace saloha {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model parameters, malformed blocks or bad input files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver did not reach its tolerance, or a linear system
/// that should be regular turned out singular.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// The stationary vector of a stochastic matrix is not unique.
class IrreducibilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace saloha
