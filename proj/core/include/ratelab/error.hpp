#pragma once

#include <stdexcept>
#include <string>

namespace ratelab {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated (bad shape, out-of-range action,
// invalid spec, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A NaN/Inf showed up in a loss or gradient.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Checkpoint or report produced by an incompatible format version.
class VersionMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Enumeration or search would exceed its configured work budget.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

}  // namespace ratelab
