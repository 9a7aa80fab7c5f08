#pragma once

#include <stdexcept>
#include <string>

namespace parinv {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// An iterative solve hit its iteration cap before reaching tolerance.
class NonConvergence : public Error {
 public:
  using Error::Error;
};

/// The n x n system could not be factorized even after one jittered retry.
class FactorizationFailure : public Error {
 public:
  using Error::Error;
};

class InvalidWeights : public Error {
 public:
  using Error::Error;
};

class EmptySupport : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised by the sampler drivers when numerical incidents exceed the allowed rate.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace parinv
