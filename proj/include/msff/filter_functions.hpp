#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msff/gate_metrics.hpp"
#include "msff/noise.hpp"

namespace msff {

enum class NoiseChannel { mode_frequency, laser_phase, laser_intensity };

/// Evaluates the four filter functions of one pulse at arbitrary frequencies.
/// Values without the Ω prefactor ("unit") are Ω^-2 F_α, Ω^-4 F_Θ, and so on;
/// gradients are with respect to every segment frequency μ_l.
class FilterKernel {
 public:
  FilterKernel(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair);

  /// r_k = 1 for every mode when unit_scaling is set.
  double f_alpha_unit(double f_hz, bool unit_scaling = false, std::span<double> grad = {}) const;
  double f_theta_unit(double f_hz, bool unit_scaling = false, std::span<double> grad = {}) const;
  double g_theta_unit(double f_hz) const;

  double f_alpha(double f_hz, bool unit_scaling = false) const;
  double f_theta(double f_hz, bool unit_scaling = false) const;
  double g_alpha(double f_hz) const { return f_alpha(f_hz, true); }
  double g_theta(double f_hz) const;

 private:
  const FMPulse& pulse_;
  const ModeStructure& modes_;
  IonPair pair_;
  std::vector<LinearPhase> pos_, neg_;
};

double f_alpha(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair, double f_hz);
double f_theta(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair, double f_hz);
double g_alpha(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair, double f_hz);
double g_theta(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair, double f_hz);

struct FilterFunctionTable {
  std::vector<double> frequency;  // Hz
  std::vector<double> f_alpha, f_theta, g_alpha, g_theta;
  std::string fingerprint;
};

FilterFunctionTable filter_table(const FMPulse& pulse, const ModeStructure& modes,
                                 const IonPair& pair, const std::vector<double>& frequencies);
/// Columns f_hz,F_alpha,F_theta,G_alpha,G_theta.
std::string filter_table_csv(const FilterFunctionTable& table);

struct PredictOptions {
  /// Infrared cutoff in Hz; NaN selects the PSD's own f_min (1/f) or 1 Hz.
  double f_min = NAN;
  double f_max = 13.3e6;
  int per_decade = 48;
  int peak_points = 160;
};

struct ErrorPrediction {
  double e_alpha = 0.0;
  double e_theta = 0.0;
  double e_total() const { return e_alpha + e_theta; }
  double f_lo = 0.0, f_hi = 0.0;
  std::size_t grid_points = 0;
};

/// First-order errors: mode_frequency integrates S/(2πf)²·F, laser_phase S·F with
/// r_k = 1, laser_intensity S/Ω²·G. Both signs of f are included; lines are exact.
ErrorPrediction predict_error(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                              const NoisePSD& psd, NoiseChannel channel,
                              const PredictOptions& opt = {});

/// Integration limits used by predict_error for this PSD; throws when a continuum
/// reaching f = 0 is given no positive cutoff.
std::pair<double, double> prediction_band(const NoisePSD& psd, const PredictOptions& opt);

/// Grid used by predict_error (positive frequencies, Hz).
std::vector<double> prediction_grid(const NoisePSD& psd, const PredictOptions& opt);

}  // namespace msff
