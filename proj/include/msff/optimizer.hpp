#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msff/filter_functions.hpp"

namespace msff {

enum class Method { robust_fm_1, robust_fm_2, ff_opt, batch_ff };

const char* method_name(Method m);
Method parse_method(const std::string& name);

struct OptimizerConfig {
  Method method = Method::robust_fm_1;
  int segments = 40;
  double duration = 150e-6;
  /// Odd segment counts share the middle segment.
  bool odd = false;
  /// Rabi cap Ω_max in rad/s; zero disables the penalty.
  double rabi_max = 0.0;
  double beta = 1e-5;
  double gamma = 30.0;
  std::optional<NoisePSD> psd;
  /// Quadrature grid of the FF terms; coarser than the prediction default.
  PredictOptions grid{NAN, 2e6, 16, 48};
  /// Evaluate the F_Θ term only at f = ±1/(2τ).
  bool representative_only = false;
  /// Per-mode offsets δ_k ~ normal(0, batch_std · c_k) with c_k from batch_rule.
  double batch_std = kTwoPi * 500.0;
  OffsetRule batch_rule = OffsetRule::uniform;
  /// batch_ff evaluates its FF terms on two lines at ±f_c carrying the Gaussian peak's
  /// variance instead of the full Gaussian + 1/f PSD, which keeps the shifted-mode
  /// F_α(f -> 0) from being amplified by the 1/f³ phase weight.
  bool batch_line_surrogate = true;
  /// BFGS cap per start; zero picks 2000 for the robust methods and 300 for ff_opt.
  int max_iterations = 0;
  int batch_iterations = 10000;
  double learning_rate = 0.02;  // Adam step in units of the parameter scale
  int starts = 4;
  std::uint64_t seed = 1;
  double gradient_tolerance = 1e-9;
  /// Bounds are [min ω - margin, max ω + margin].
  double bound_margin = kTwoPi * 200e3;
  /// Initial guess μ0 = min ω + initial_detuning.
  double initial_detuning = -kTwoPi * 10e3;
  /// Start i > 0 uses the detuning initial_detuning · 2^i plus per-segment
  /// perturbations of this spread, rad/s.
  double start_spread = kTwoPi * 2e3;
  /// Wall-clock budget per start in seconds; zero means unlimited.
  double time_limit = 0.0;

  void validate() const;
  int iteration_cap() const;
};

struct CostBreakdown {
  double c1 = 0.0;
  double c2 = 0.0;          // second-order displacement term (robust_fm_2)
  double ff_alpha = 0.0;
  double ff_theta = 0.0;
  double penalty = 0.0;
  double batch_alpha = 0.0;  // Σ|α(δ)|²
  double batch_theta = 0.0;  // ½(Θ(δ) - π/4)²
  double rabi = 0.0;         // Ω after rescaling, rad/s
  double total() const { return c1 + c2 + ff_alpha + ff_theta + penalty + batch_alpha + batch_theta; }
};

/// Precomputed quadrature weights for the FF terms of one config.
struct FFWeights {
  std::vector<double> frequency;  // Hz, positive
  std::vector<double> weight;     // includes the channel factor and both signs
  std::vector<double> theta_frequency;
  std::vector<double> theta_weight;
};

FFWeights ff_weights(const OptimizerConfig& cfg);

/// Cost with Ω rescaled so that Θ = π/4 (with the pulse's spin_phase_sign).
/// offsets: per-mode static shifts for the batch cost (empty = none).
/// grad, when non-null, receives d(total)/dμ_l for every segment.
CostBreakdown evaluate_cost(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                            const OptimizerConfig& cfg, const std::vector<double>& offsets = {},
                            std::vector<double>* grad = nullptr, const FFWeights* weights = nullptr);

/// Gradient over the free (first-half) segments with symmetric folding.
std::vector<double> gradient(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                             const OptimizerConfig& cfg);

/// Ω -> Ω sqrt((π/4)/Θ); throws NumericalError when Θ <= 0.
FMPulse rescale_omega(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair);

/// Sign that makes Θ positive for this pulse, or +1 if Θ vanishes.
int natural_spin_sign(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair);

struct OptimizationResult {
  FMPulse pulse;
  CostBreakdown cost;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
  bool line_search_failed = false;
  int start_index = 0;
  /// Per iteration; batch_ff records the validation-batch cost every tenth step.
  std::vector<double> cost_history;
  std::vector<double> rabi_history;
  std::string message;
};

/// Default initial guess: constant μ0 = min ω + initial_detuning.
FMPulse initial_guess(const OptimizerConfig& cfg, const ModeStructure& modes);

OptimizationResult optimize(const OptimizerConfig& cfg, const ModeStructure& modes,
                            const IonPair& pair, std::optional<FMPulse> initial = std::nullopt);

/// Adam on the batch cost with offsets redrawn every iteration. The returned pulse
/// is the iterate with the lowest cost on a fixed validation batch.
OptimizationResult optimize_batch(const OptimizerConfig& cfg, const ModeStructure& modes,
                                  const IonPair& pair, std::optional<FMPulse> initial = std::nullopt);

}  // namespace msff
