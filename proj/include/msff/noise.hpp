#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "msff/common.hpp"

namespace msff {

enum class PsdKind { zero, gaussian_plus_oneoverf, monotone_line, tabulated, white };

/// Contributes weight * [δ(f - frequency) + δ(f + frequency)] to a two-sided PSD.
struct SpectralLine {
  double frequency = 0.0;  // Hz
  double weight = 0.0;     // PSD units * Hz
};

struct PsdTable {
  std::vector<double> frequency;  // Hz, ascending, > 0
  std::vector<double> density;    // two-sided S(f)
  std::vector<double> density_std;
};

/// User-facing parameters; defaults reproduce the Gaussian + 1/f model with
/// std 2π·500 rad/s (peak) and 2π·100 rad/s (1/f).
struct PsdSpec {
  PsdKind kind = PsdKind::gaussian_plus_oneoverf;
  double center = 10e3;       // f_c, Hz
  double width = 0.0;         // σ, Hz; 0 selects f_c / 10
  double peak_std = kTwoPi * 500.0;
  double flicker_std = kTwoPi * 100.0;
  double f_min = 1.0;         // Hz
  double f_max = 13.3e6;      // Hz
  double line_amplitude = 0.0;  // A
  double line_frequency = 0.0;  // f', Hz
  double white_level = 0.0;
  double white_bandwidth = 0.0;  // Hz
  PsdTable table;
};

/// Two-sided PSD of a real stationary process.
struct NoisePSD {
  PsdKind kind = PsdKind::zero;
  double center = 0.0, width = 0.0;
  double n1 = 0.0, n2 = 0.0;  // Gaussian and 1/f normalizations
  double f_min = 1.0, f_max = 13.3e6;
  double white_level = 0.0, white_bandwidth = 0.0;
  std::vector<SpectralLine> lines;
  PsdTable table;

  /// Continuous part of S at |f|.
  double density(double f) const;
  /// ∫ S df over the whole axis, lines included.
  double variance() const;
  /// Variance of the Gaussian part alone (n1 for an untruncated peak).
  double peak_variance() const { return n1; }
  bool has_flicker() const { return kind == PsdKind::gaussian_plus_oneoverf && n2 > 0.0; }
  bool has_continuum() const { return kind != PsdKind::zero && kind != PsdKind::monotone_line; }
  /// Smallest and largest frequency carrying continuous weight.
  double lower_edge() const;
  double upper_edge() const;
  /// Same PSD multiplied by c.
  NoisePSD scaled(double c) const;
  /// Tabulated only: density redrawn from normal(mean, std), clipped at zero.
  NoisePSD redrawn(std::mt19937_64& rng) const;
};

NoisePSD build_psd(const PsdSpec& spec);
/// Pure line PSD (A/2)² [δ(f - f') + δ(f + f')].
NoisePSD monotone_psd(double amplitude, double frequency_hz);

/// Positive-frequency grid adapted to the PSD: logarithmic between lo and hi,
/// with linear refinement across [f_c - 5σ, f_c + 5σ] for a Gaussian peak.
std::vector<double> frequency_grid(const NoisePSD& psd, double lo, double hi, int per_decade = 48,
                                   int peak_points = 160);

/// ∫_{lo}^{hi} g(f) df by the trapezoid rule in ln f over `grid` (ascending, > 0).
double log_trapezoid(const std::vector<double>& grid, const std::vector<double>& values);

/// One cosine component a cos(2π f t + φ) of a synthesized trace.
struct NoiseComponent {
  double frequency = 0.0;  // Hz
  double amplitude = 0.0;
};

/// Frequencies and amplitudes whose random-phase sum has variance ∫S over
/// [lo, hi] on both sides; continuous bins carry their integrated power.
std::vector<NoiseComponent> synthesis_components(const NoisePSD& psd, double lo, double hi,
                                                 int per_decade = 48, int peak_points = 160);

/// One random-phase realization; evaluates the process and its time integral.
class NoiseRealization {
 public:
  NoiseRealization() = default;
  NoiseRealization(const std::vector<NoiseComponent>& components, std::mt19937_64& rng);

  double value(double t) const;
  /// Φ(t) = ∫_0^t value.
  double integral(double t) const;
  std::size_t size() const { return freq_.size(); }

 private:
  std::vector<double> freq_, amp_, phase_;
};

struct NoiseTrace {
  std::vector<double> times;
  std::vector<double> values;    // δ(t)
  std::vector<double> integral;  // ∫_0^t δ
  std::uint64_t seed = 0;
};

/// Samples one realization on t_n = n dt, n = 0..ceil(duration/dt).
/// Throws ConfigError if dt does not resolve the PSD's upper edge.
NoiseTrace realize_trace(const NoisePSD& psd, double duration, double dt, std::uint64_t seed);

/// Independent generator for realization `index` of a seeded ensemble.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index);

std::vector<double> sample_static_offsets(double std_dev, std::size_t count, std::uint64_t seed);

/// Default static-offset std: 2π·sqrt(500² + 100²) rad/s.
inline double default_static_std() { return kTwoPi * 509.9019513592785; }

/// Reads CSV columns f_hz,S_over_f2,S_over_f2_std into a tabulated PSD (S = value·f²).
/// Duplicate frequencies from overlapping bands are averaged.
NoisePSD read_tabulated_psd(const std::string& csv_text);
std::string psd_csv(const NoisePSD& psd, const std::vector<double>& grid);

}  // namespace msff
