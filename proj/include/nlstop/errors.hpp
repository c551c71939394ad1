#pragma once

#include <stdexcept>
#include <string>

namespace nlstop {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid sizes, probabilities, schema or reward assumptions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Monotone-scheme condition K_g * max|increment| <= 1 violated.
class StabilityError : public Error {
 public:
  using Error::Error;
};

// Enumeration budget or tree depth cap exceeded.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// Bad call arguments (range errors, precondition violations).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace nlstop
