#pragma once

// Time-domain verification of MS pulses.
//
// With only the pair illuminated the Hamiltonian is linear in a_k, a_k† and the
// commuting σ_x operators, so in the σ_x eigenbasis every spin configuration s
// drives each mode with a c-number force. The propagator is then exactly a
// spin-dependent displacement times a spin-dependent phase (the Magnus series
// stops at second order), for any noise trace. The state-vector path evaluates
// those two integrals on a sub-grid where the noisy phase is piecewise linear.
// A truncated-Fock integrator of the same per-configuration dynamics is kept
// as an independent cross-check.

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "msff/filter_functions.hpp"

namespace msff {

struct SimulationConfig {
  /// Fock truncation of the cross-check integrator and the Lindblad path.
  int fock_truncation = 10;
  /// Sub-intervals per pulse segment on which noise phases are interpolated.
  int substeps = 8;
  /// Concatenated gate counts for the linear-fit extraction.
  std::vector<int> gate_counts = {1, 9, 13, 21};
  int realizations = 200;
  std::uint64_t seed = 1;
  /// δ_k = r_k δ (scaled) or δ (uniform) for the mode-frequency channel.
  OffsetRule mode_rule = OffsetRule::scaled;
  /// Grid used to synthesize noise components.
  PredictOptions synthesis;
  void validate() const;
};

/// One noise realization per channel; null channels are noiseless.
struct NoiseInput {
  const NoiseRealization* mode_frequency = nullptr;  // δ(t), rad/s
  const NoiseRealization* laser_phase = nullptr;     // φ(t), rad
  const NoiseRealization* laser_intensity = nullptr;  // Ω'(t), rad/s
  std::vector<double> static_offsets;  // per mode, rad/s; empty = none
  double rabi_offset = 0.0;            // Ω -> Ω (1 + rabi_offset)
};

/// Spin configurations of the pair in the σ_x basis, index 2 b1 + b2 with s = 1 - 2b.
inline constexpr std::array<std::array<int, 2>, 4> kSpinConfigs = {{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};

struct FinalState {
  int gates = 1;
  /// Two-qubit density matrix in the computational basis |00>, |01>, |10>, |11>.
  Eigen::Matrix4cd rho;
  /// β_k(s): final displacement of mode k for spin configuration s (modes x 4).
  Eigen::MatrixXcd displacement;
  /// Spin-dependent geometric phase Φ(s).
  std::array<double, 4> phase{};
};

/// Closed-form propagation for each requested gate count (ascending).
std::vector<FinalState> evolve_statevector(const FMPulse& pulse, const ModeStructure& modes,
                                           const IonPair& pair, const NoiseInput& noise,
                                           const SimulationConfig& cfg);

/// Truncated-Fock RK4 integration of the same dynamics (one gate). Throws NumericalError
/// when the top Fock level of any configuration holds more than 1e-8 population.
Eigen::Matrix4cd evolve_fock(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                             const NoiseInput& noise, int truncation, int steps_per_segment = 200);

struct SequencePoint {
  int gates = 1;
  double eps = 0.0;          // ½(p01 + p10 + 1 - c)
  double populations = 0.0;  // p01 + p10
  double contrast = 0.0;     // 2 |ρ_00,11|
};

SequencePoint sequence_point(const Eigen::Matrix4cd& rho, int gates);
/// |Θ| recovered from a displacement-free state cos Θ|00> + i sin Θ|11>.
double extracted_angle(const Eigen::Matrix4cd& rho);

struct GateErrorReport {
  std::vector<SequencePoint> points;
  double slope = 0.0;  // gate error
  double slope_std = 0.0;
  double intercept = 0.0;
  /// Single-gate estimates E_α ≈ p01 + p10 and E_Θ ≈ ½(1 - c - E_α) from the first point.
  double e_alpha = 0.0;
  double e_theta = 0.0;
};

/// OLS of ε against gate count. Throws ConfigError with fewer than two distinct counts.
GateErrorReport extract_gate_error(const std::vector<SequencePoint>& points);
std::string sequence_csv(const std::vector<SequencePoint>& points);

struct MonteCarloReport {
  int realizations = 0;
  std::vector<int> gate_counts;
  std::vector<double> mean_eps, stderr_eps, std_eps;  // per gate count
  double mean_e_alpha = 0.0, stderr_e_alpha = 0.0;    // single gate
  double mean_e_theta = 0.0, stderr_e_theta = 0.0;
  /// Per-realization single-gate ε (first gate count).
  std::vector<double> samples;
  /// Gate error from the linear fit of the mean ε, when two or more counts are given.
  std::optional<GateErrorReport> fit;
};

/// Seeded ensemble of state-vector runs; realization i uses stream_rng(seed, i).
MonteCarloReport monte_carlo_error(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                                   const NoisePSD& psd, NoiseChannel channel, const SimulationConfig& cfg);

/// Quasi-static prediction: the exact static error averaged over δ ~ normal(0, ∫S df),
/// with δ_k from `rule` (Gauss-Hermite, 48 nodes).
double static_average_prediction(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                                 const NoisePSD& psd, OffsetRule rule = OffsetRule::scaled);

}  // namespace msff
