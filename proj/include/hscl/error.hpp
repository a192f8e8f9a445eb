#pragma once

#include <stdexcept>
#include <string>

namespace hscl {

// Raised when caller-supplied parameters violate a documented precondition.
// The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised for failures discovered while doing the work (I/O, numerics).
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hscl
