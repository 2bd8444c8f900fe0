#pragma once

#include <stdexcept>
#include <string>

namespace tate {

/// Base of every error the library raises. Each family maps to a fixed CLI
/// exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept = 0;
};

/// Malformed input data or schema descriptor.
class SchemaError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// A shared-covariate level seen in the target has no source support.
class PositivityError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// A nuisance fit or estimator could not be computed.
class EstimationError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 5; }
};

}  // namespace tate
