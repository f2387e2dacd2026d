#pragma once

#include <stdexcept>
#include <string>

namespace rgls {

/// Two traces or gathers that must share sampling/geometry do not.
class MismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Newton damping reached its cap without producing a positive-definite system.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wavefield blew up (typically a CFL violation).
class InstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misfit became NaN or infinite during inversion.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rgls
