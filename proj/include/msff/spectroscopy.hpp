#pragma once

// Dephasing spectroscopy with CPMG echo trains: the filter kernel of a sequence,
// the forward model from a PSD to Ramsey contrast, and the inverse estimate.

#include <string>
#include <vector>

#include "msff/noise.hpp"

namespace msff {

struct CPMGSequence {
  int pulses = 1;         // L
  double interval = 0.0;  // τ̃, s
  /// Optional π-pulse times τ̃_1..τ̃_L; empty selects (i - ½) τ̃.
  std::vector<double> stamps;

  /// 0, τ̃_1, ..., τ̃_L, L τ̃.
  std::vector<double> times() const;
  double total() const { return pulses * interval; }
  /// Centre of the main passband, 1/(2τ̃).
  double peak_frequency() const { return 0.5 / interval; }
  void validate() const;
};

/// ỹ(f) = (2πf)^{-1} Σ_j (-1)^j (e^{2πi f τ̃_j} - e^{2πi f τ̃_{j+1}}), finite at f = 0.
cplx cpmg_filter(const CPMGSequence& seq, double f);
inline double cpmg_kernel(const CPMGSequence& seq, double f) { return std::norm(cpmg_filter(seq, f)); }
/// ∫_0^∞ |ỹ|² df = L τ̃ / 2 (Parseval on the ±1 switching function).
inline double kernel_area(const CPMGSequence& seq) { return 0.5 * seq.total(); }

struct ContrastPrediction {
  double chi = 0.0;
  double contrast = 1.0;
};

/// χ = 4 ∫_0^∞ S |ỹ|² df (lines exact), contrast e^{-χ}. `refine` subdivides every
/// quadrature panel, for convergence checks.
ContrastPrediction forward_contrast(const NoisePSD& psd, const CPMGSequence& seq, int refine = 1);

struct ContrastMeasurement {
  int pulses = 1;
  double interval = 0.0;  // s
  double contrast = 1.0;
  double contrast_std = 0.0;
};

/// CSV columns L,tau_tilde_s,contrast,contrast_std (header optional).
std::vector<ContrastMeasurement> read_measurements(const std::string& csv_text);
std::string measurements_csv(const std::vector<ContrastMeasurement>& m);

struct InversionOptions {
  /// Also deconvolve all measurements jointly: log S piecewise linear in log f
  /// through the filter-peak frequencies, fitted by damped Gauss-Newton.
  bool joint_fit = false;
  /// Weight of the second-difference penalty on the node densities.
  double smoothing = 1e-3;
  /// Fit nodes; zero uses one per distinct peak frequency.
  int fit_nodes = 0;
};

struct PsdEstimate {
  double frequency = 0.0;  // Hz
  double density = 0.0;    // two-sided S
  double density_std = 0.0;
  int pulses = 0;
  double interval = 0.0;
  /// Averaged with the other pulse count's band where they overlap.
  bool averaged = false;
};

struct InversionResult {
  /// Narrowband estimates S(1/(2τ̃)) ≈ χ / (4 ∫|ỹ|²), ascending in frequency.
  std::vector<PsdEstimate> points;
  std::vector<std::string> warnings;
  /// Tabulated PSD built from `points`.
  NoisePSD psd;
  /// Joint-fit density at the same frequencies, when requested.
  std::vector<double> fit_density;
  double fit_residual = 0.0;  // weighted RMS of the χ misfit
};

InversionResult invert_psd(const std::vector<ContrastMeasurement>& m, const InversionOptions& opt = {});

/// Tabulated CSV f_hz,S_over_f2,S_over_f2_std,S,S_std (readable by read_tabulated_psd),
/// with a trailing S_fit column when the joint fit ran.
std::string inversion_csv(const InversionResult& r);

}  // namespace msff
