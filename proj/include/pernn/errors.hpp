#pragma once

#include <stdexcept>
#include <string>

namespace pernn {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, malformed input files, shape/width mismatches.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence, failed gradient checks.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A value left the valid domain of a physics operator.
class DomainError : public NumericError {
 public:
  DomainError(std::string variable, const std::string& what)
      : NumericError(what), variable_(std::move(variable)) {}

  const std::string& variable() const noexcept { return variable_; }

 private:
  std::string variable_;
};

}  // namespace pernn
