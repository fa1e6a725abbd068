#pragma once

#include <stdexcept>
#include <string>

namespace wdm {

/// Shapes that do not line up (odd sizes, non-divisible factors, mismatched tensors).
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed serialized data or inconsistent coefficient layout.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A formula was evaluated at a point where it divides by zero.
struct SingularityError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values appeared while sampling or training.
class NumericalDivergence : public std::runtime_error {
 public:
  NumericalDivergence(const std::string& what, long step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace wdm
