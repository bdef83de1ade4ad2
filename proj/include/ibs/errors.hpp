#pragma once

#include <stdexcept>
#include <string>

namespace ibs {

// Raised when a caller breaks an operation's precondition (bad index, shape, stale cache).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Rejection sampling could not place an entity within the attempt cap.
class InfeasibleLayout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values reached an optimizer step.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ibs
