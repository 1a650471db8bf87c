#pragma once

#include <stdexcept>
#include <string>

namespace hcustom {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or grid dimensions do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is invalid or incompatible. `field` names the offender.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// NaN/Inf in activations, or a diverging loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Input violates a documented precondition (missing descriptor, degenerate box, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace hcustom
