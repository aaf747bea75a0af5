#pragma once

#include <stdexcept>
#include <string>

namespace bgw {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed model or configuration (bad probabilities, wrong dimensions).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a function (table lookup out of box, lambda >= 1).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Exact computation refused because it would exceed a resource cap.
class ResourceError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Power iteration oscillates; the dominant class is periodic.
class PeriodicityError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

/// Survival underflow or an empty regression window.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Too few survivors for a conditional-law statistic.
class StatisticsError : public Error {
 public:
  using Error::Error;
};

/// Pipeline stage requested without the stage it depends on.
class DependencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace bgw
