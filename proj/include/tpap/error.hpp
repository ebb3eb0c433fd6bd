#pragma once

#include <stdexcept>
#include <string>

namespace tpap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy an op's shape rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff graph (non-scalar loss, backward twice, ...).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Malformed structured text (architecture descriptors, config files).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A spec struct (attack, purifier, training, config) violates its invariants.
/// `field()` names the offending field, e.g. "attack.epsilon".
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace tpap
