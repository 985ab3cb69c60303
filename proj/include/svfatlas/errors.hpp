#pragma once

#include <stdexcept>
#include <string>

namespace svfatlas {

// Base of every error thrown by the library. The CLI maps subclasses onto
// exit codes (see tools/svfatlas.cpp).
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
  public:
    using Error::Error;
};

// NCC on a (near-)constant field has no defined correlation.
class DegenerateSimilarity : public Error {
  public:
    using Error::Error;
};

// Jacobian weights in the forward closed-form atlas summed to ~0 at a voxel.
class DegenerateWeights : public Error {
  public:
    using Error::Error;
};

class DegenerateIntensity : public Error {
  public:
    using Error::Error;
};

// An operation was invoked out of order (e.g. learned atlas update mid-epoch).
class SequencingError : public Error {
  public:
    using Error::Error;
};

// Non-finite loss or gradient during optimization.
class NumericFailure : public Error {
  public:
    using Error::Error;
};

class NonInvertibleMap : public Error {
  public:
    NonInvertibleMap(const std::string &what, double residual) : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

  private:
    double residual_;
};

class FormatError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class ConfigInfeasible : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

} // namespace svfatlas
