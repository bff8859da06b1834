#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace landau {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846264338327950288;

/// Precondition or invariant violated by caller-supplied parameters.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine could not deliver its contract (singular shift,
/// quadrature that did not converge, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The Fermi gap closed somewhere on the twist torus.
class GapClosingError : public NumericalError {
 public:
  GapClosingError(const std::string& what, double theta1, double theta2)
      : NumericalError(what), theta1_(theta1), theta2_(theta2) {}
  double theta1() const noexcept { return theta1_; }
  double theta2() const noexcept { return theta2_; }

 private:
  double theta1_;
  double theta2_;
};

/// A propagated state reached the boundary layer of an open box.
class BoundaryLeakError : public NumericalError {
 public:
  BoundaryLeakError(const std::string& what, double max_admissible_time)
      : NumericalError(what), max_time_(max_admissible_time) {}
  double max_admissible_time() const noexcept { return max_time_; }

 private:
  double max_time_;
};

}  // namespace landau
