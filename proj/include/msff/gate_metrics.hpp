#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "msff/mode_solver.hpp"
#include "msff/pulse.hpp"

namespace msff {

struct IonPair {
  int first = 1;
  int second = 2;
  void validate(const ModeStructure& modes) const;
};

/// How a common offset δ is distributed over the modes.
enum class OffsetRule {
  scaled,   // ω_k -> ω_k + r_k δ
  uniform,  // ω_k -> ω_k + δ
};

// Unit kernels (Ω = 1, η = 1); omega is the mode frequency in rad/s.

/// ∫ t^n e^{-iθ(t)} dt with θ = ∫(μ - omega).
cplx mode_moment(const FMPulse& pulse, double omega, int n);
/// ∫∫_{t2<t1} t1^p t2^q e^{i(θ(t1) - θ(t2))}.
cplx mode_ordered(const FMPulse& pulse, double omega, int p, int q);

/// α_kj with ω_k -> ω_k + offset.
cplx displacement(const FMPulse& pulse, const ModeStructure& modes, int ion, int mode,
                  double offset = 0.0);
/// ᾱ_kj = (Ωη/2τ) ∫ (τ - t) e^{-iθ}.
cplx averaged_displacement(const FMPulse& pulse, const ModeStructure& modes, int ion, int mode);
/// ∂^m α_kj / ∂ω_k^m, 1 <= m <= 12.
cplx displacement_derivative(const FMPulse& pulse, const ModeStructure& modes, int ion, int mode,
                             int order, double offset = 0.0);

/// Θ including the pulse's spin_phase_sign; offsets (per mode, rad/s) may be empty.
double rotation_angle(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                      std::span<const double> offsets = {});
/// Θ with a common offset δ distributed by `rule`.
double rotation_angle(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                      double delta, OffsetRule rule);
/// ∂^m Θ / ∂δ^m at δ = 0 for ω_k -> ω_k + r_k δ (or + δ with the uniform rule).
double angle_derivative(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                        int order, OffsetRule rule = OffsetRule::scaled);

struct GateMetrics {
  Eigen::MatrixXcd displacements;           // modes x 2 (pair order)
  Eigen::MatrixXcd averaged_displacements;  // modes x 2
  std::vector<Eigen::MatrixXcd> derivatives;  // [m-1], modes x 2
  double rotation_angle = 0.0;
  double angle_derivative = 0.0;  // first order, scaled rule
  double displacement_error = 0.0;
  double angle_error = 0.0;
};

struct ErrorOptions {
  /// Weight each |α_kj|² by 2(n̄_k + ½).
  bool thermal_weighting = false;
};

GateMetrics evaluate_metrics(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                             int max_order = 4, const ErrorOptions& opt = {});

/// E_α = Σ_k (|α_k,j1|² + |α_k,j2|²) at shifted frequencies.
double displacement_error(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                          std::span<const double> offsets = {}, const ErrorOptions& opt = {});

struct StaticErrorPoint {
  double delta = 0.0;  // rad/s
  double e_alpha = 0.0;
  double e_theta = 0.0;
  double e_total() const { return e_alpha + e_theta; }
  /// |δ_k^m/m! ∂^mα_kj/∂ω_k^m|, [m] for m = 0..max_order, each modes x 2.
  std::vector<Eigen::MatrixXd> alpha_orders;
  /// |δ^m/m! ∂^mΘ/∂δ^m| for m = 0..max_order; m = 0 holds |Θ - π/4|.
  std::vector<double> theta_orders;
};

struct SweepOptions {
  OffsetRule rule = OffsetRule::scaled;
  int max_order = 4;
  ErrorOptions errors;
};

std::vector<StaticErrorPoint> static_error_sweep(const FMPulse& pulse, const ModeStructure& modes,
                                                 const IonPair& pair, std::span<const double> deltas,
                                                 const SweepOptions& opt = {});

/// CSV with columns delta_hz,E_alpha,E_Theta,E_total.
std::string static_sweep_csv(const std::vector<StaticErrorPoint>& points);

struct AmplitudeSensitivity {
  double dephasing = 0.0;  // |∂Θ/∂δ|, per rad/s
  double amplitude = 0.0;  // |Θ| / ω_CM, per rad/s
};

AmplitudeSensitivity amplitude_sensitivity(const FMPulse& pulse, const ModeStructure& modes,
                                           const IonPair& pair);

}  // namespace msff
