#pragma once

#include <stdexcept>

namespace sgdcurve {

// Inputs that violate an operation's preconditions (shape, sign, range).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The requested (learning rate, batch size) pair makes expected SGD dynamics
// diverge, so a stationary quantity does not exist.
class UnstableError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace sgdcurve
