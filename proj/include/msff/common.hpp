#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace msff {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// CODATA 2018 exact / recommended values.
inline constexpr double kHbar = 1.054571817e-34;           // J s
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m
inline constexpr double kAtomicMassUnit = 1.66053906660e-27;  // kg

inline constexpr double kYb171Mass = 170.9363258 * kAtomicMassUnit;

/// Target XX rotation angle of an ideal MS gate.
inline constexpr double kTargetAngle = kPi / 4.0;

inline double hz_to_rad(double hz) { return kTwoPi * hz; }
inline double rad_to_hz(double rad_per_s) { return rad_per_s / kTwoPi; }

// Error categories map onto CLI exit codes (2, 3, 4).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace msff
