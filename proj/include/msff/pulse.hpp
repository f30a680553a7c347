#pragma once

#include <span>
#include <vector>

#include "msff/common.hpp"
#include "msff/phase_integrals.hpp"

namespace msff {

/// Piecewise-constant FM drive on S equal-width segments.
struct FMPulse {
  double duration = 0.0;      // τ, s
  double rabi = 0.0;          // Ω, rad/s
  std::vector<double> mu;     // μ_i, rad/s
  bool symmetric = false;
  /// ±1. Flips the spin operator of the second ion of the pair, which maps
  /// Θ -> -Θ and α_k,j2 -> -α_k,j2 and leaves every error measure unchanged.
  int spin_phase_sign = 1;

  std::size_t segment_count() const { return mu.size(); }
  double width() const { return duration / static_cast<double>(mu.size()); }
  double boundary(std::size_t i) const { return width() * static_cast<double>(i); }

  /// Throws ConfigError if the invariants are violated.
  void validate() const;
};

/// Mirrors free values: [a, b] -> [a, b, b, a], or [a, b, a] when odd.
FMPulse build_symmetric_pulse(std::span<const double> free_values, double duration, double rabi,
                              bool odd = false);

/// Number of free parameters of a symmetric pulse with S segments.
inline std::size_t free_count(std::size_t segments) { return (segments + 1) / 2; }

/// First half (rounded up) of a symmetric pulse's segments.
std::vector<double> free_values(const FMPulse& pulse);

/// θ_k(t) = ∫_0^t (μ - omega) with θ(0) = 0.
LinearPhase mode_phase(const FMPulse& pulse, double omega);

/// One phase per mode, frequencies in rad/s.
std::vector<LinearPhase> phase_trace(const FMPulse& pulse, std::span<const double> mode_frequencies);

/// Right-continuous μ(t); t = τ returns the last segment.
std::vector<double> sample_mu(const FMPulse& pulse, std::span<const double> times);

/// Evaluates a LinearPhase at time t (right-continuous segment lookup).
double phase_at(const LinearPhase& phase, double t);

}  // namespace msff
