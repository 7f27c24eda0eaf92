#pragma once

#include <stdexcept>
#include <string>

namespace hprune {

// Root of everything the library throws on bad input or numerical failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Gram matrix could not be factored even after the ridge was added.
class SingularError : public Error {
 public:
  SingularError(const std::string& what, double condition_estimate)
      : Error(what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

class PositiveDefinitenessError : public Error {
 public:
  using Error::Error;
};

// Selection/compensation inputs that disagree on index sets or shapes.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// File-format failures. Each subclass is a distinct diagnostic.
class FormatError : public Error {
 public:
  using Error::Error;
};
class SchemaError : public FormatError {
 public:
  using FormatError::FormatError;
};
class LengthError : public FormatError {
 public:
  using FormatError::FormatError;
};
class ChainError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace hprune
