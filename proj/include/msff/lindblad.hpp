#pragma once

// Open-system simulation of the gate under motional heating and laser dephasing.
//
// Each pass holds the two qubits and one mode. Passes run one mode at a time; the
// spin state left by pass k (mode traced out) starts pass k + 1. The coherent parts
// of different modes commute, so without dissipation the composition is exact.
// Laser dephasing acts in every pass with its rate divided by the number of passes.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msff/simulator.hpp"

namespace msff {

struct DissipationRates {
  /// Heating rate Γ_k per mode, quanta/s. Empty means no heating.
  std::vector<double> heating;
  /// Laser coherence time T_l in seconds; infinity disables the channel.
  double laser_coherence = INFINITY;
  void validate(int mode_count) const;
};

/// Γ = 614 quanta/s on the centre-of-mass mode, 5 quanta/s elsewhere, T_l = 0.496 s.
DissipationRates default_rates(const ModeStructure& modes);

struct LindbladConfig {
  int truncation = 10;
  /// RK4 steps per pulse segment; the step must keep |μ - ω_k| h below 0.1 rad.
  int steps_per_segment = 80;
  std::vector<int> gate_counts = {1, 9, 13, 21};
  /// Without laser dephasing, each mode is a driven oscillator under momentum
  /// diffusion (equal up and down heating rates). Its trace over spin
  /// coherences is then exact and needs no Fock truncation. Set false to force
  /// the numerical pass.
  bool closed_form = true;
  /// Numerical pass only: largest tolerated top-level population.
  double max_top_population = 1e-6;
  void validate() const;
};

struct LindbladResult {
  std::vector<int> gate_counts;
  std::vector<Eigen::Matrix4cd> rho;  // computational basis, one per gate count
  /// Largest population seen on the top Fock level at the end of any pass.
  double top_population = 0.0;
};

LindbladResult evolve_lindblad(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                               const DissipationRates& rates, const LindbladConfig& cfg);

/// Per-gate errors of the three channels for one pulse.
struct BudgetEntry {
  std::string label;
  double dephasing = 0.0;         // filter-function prediction
  double dephasing_mc = NAN;      // linear-fit Monte-Carlo value when requested
  double dephasing_mc_std = NAN;
  double heating = 0.0;           // slope of the heating-only Lindblad sequence
  double heating_std = 0.0;
  double laser = 0.0;             // slope of the laser-only Lindblad sequence
  double laser_std = 0.0;
  double total() const;
};

struct BudgetOptions {
  DissipationRates rates;
  LindbladConfig lindblad;
  /// Realizations for the Monte-Carlo dephasing column; zero skips it.
  int realizations = 0;
  std::uint64_t seed = 1;
};

BudgetEntry error_budget(const std::string& label, const FMPulse& pulse, const ModeStructure& modes,
                         const IonPair& pair, const NoisePSD& psd, const BudgetOptions& opt);

/// Rows of pulse label and channel errors in percent, plus the total.
std::string budget_table(const std::vector<BudgetEntry>& entries);
std::string budget_csv(const std::vector<BudgetEntry>& entries);

}  // namespace msff
