#include "msff/gate_metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace msff {

namespace {

LinearPhase negative_phase(const FMPulse& pulse, double omega) {
  std::vector<double> slopes(pulse.mu.size());
  for (std::size_t i = 0; i < slopes.size(); ++i) slopes[i] = omega - pulse.mu[i];
  return LinearPhase::from_slopes(pulse.width(), std::move(slopes), 0.0);
}

double factorial(int m) {
  double f = 1.0;
  for (int i = 2; i <= m; ++i) f *= i;
  return f;
}

double binomial(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }

cplx ipow(cplx z, int m) {
  cplx r(1.0, 0.0);
  for (int i = 0; i < m; ++i) r *= z;
  return r;
}

double offset_of(std::span<const double> offsets, int k) {
  return offsets.empty() ? 0.0 : offsets[static_cast<std::size_t>(k)];
}

void check_offsets(const ModeStructure& modes, std::span<const double> offsets) {
  if (!offsets.empty() && offsets.size() != static_cast<std::size_t>(modes.mode_count()))
    throw ConfigError("offset list length must equal the mode count");
}

double rule_coefficient(const ModeStructure& modes, int k, OffsetRule rule) {
  return rule == OffsetRule::scaled ? modes.scaling(k) : 1.0;
}

// ∫∫_{t2<t1} (t1 - t2)^m e^{i(θ(t1) - θ(t2))}.
cplx lag_moment(const FMPulse& pulse, double omega, int m) {
  const LinearPhase pos = mode_phase(pulse, omega);
  const LinearPhase neg = negative_phase(pulse, omega);
  cplx acc(0.0, 0.0);
  for (int p = 0; p <= m; ++p)
    acc += binomial(m, p) * ((m - p) % 2 ? -1.0 : 1.0) * ordered_integral(pos, p, neg, m - p);
  return acc;
}

}  // namespace

void IonPair::validate(const ModeStructure& modes) const {
  if (first == second) throw ConfigError("ion pair must contain two distinct ions");
  const int n = modes.ion_count();
  if (first < 0 || second < 0 || first >= n || second >= n)
    throw ConfigError("ion index out of range");
}

cplx mode_moment(const FMPulse& pulse, double omega, int n) {
  return single_integral(negative_phase(pulse, omega), n);
}

cplx mode_ordered(const FMPulse& pulse, double omega, int p, int q) {
  return ordered_integral(mode_phase(pulse, omega), p, negative_phase(pulse, omega), q);
}

cplx displacement(const FMPulse& pulse, const ModeStructure& modes, int ion, int mode,
                  double offset) {
  const double c = 0.5 * pulse.rabi * modes.lamb_dicke(mode, ion);
  if (c == 0.0) return {0.0, 0.0};
  return c * mode_moment(pulse, modes.frequencies(mode) + offset, 0);
}

cplx averaged_displacement(const FMPulse& pulse, const ModeStructure& modes, int ion, int mode) {
  const double c = 0.5 * pulse.rabi * modes.lamb_dicke(mode, ion);
  if (c == 0.0) return {0.0, 0.0};
  const auto neg = negative_phase(pulse, modes.frequencies(mode));
  return c * (single_integral(neg, 0) - single_integral(neg, 1) / pulse.duration);
}

cplx displacement_derivative(const FMPulse& pulse, const ModeStructure& modes, int ion, int mode,
                             int order, double offset) {
  if (order < 1 || order > 12) throw ConfigError("derivative order must be in 1..12");
  const double c = 0.5 * pulse.rabi * modes.lamb_dicke(mode, ion);
  if (c == 0.0) return {0.0, 0.0};
  return c * ipow(cplx(0.0, 1.0), order) *
         mode_moment(pulse, modes.frequencies(mode) + offset, order);
}

double rotation_angle(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                      std::span<const double> offsets) {
  pair.validate(modes);
  check_offsets(modes, offsets);
  const double o2 = pulse.rabi * pulse.rabi;
  if (o2 == 0.0) return 0.0;
  double theta = 0.0;
  for (int k = 0; k < modes.mode_count(); ++k) {
    const double ee = modes.lamb_dicke(k, pair.first) * modes.lamb_dicke(k, pair.second);
    if (ee == 0.0) continue;
    const double w = modes.frequencies(k) + offset_of(offsets, k);
    theta -= 0.5 * ee * mode_ordered(pulse, w, 0, 0).imag();
  }
  return pulse.spin_phase_sign * o2 * theta;
}

double rotation_angle(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                      double delta, OffsetRule rule) {
  std::vector<double> off(static_cast<std::size_t>(modes.mode_count()));
  for (int k = 0; k < modes.mode_count(); ++k) off[k] = rule_coefficient(modes, k, rule) * delta;
  return rotation_angle(pulse, modes, pair, off);
}

double angle_derivative(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                        int order, OffsetRule rule) {
  pair.validate(modes);
  if (order < 1 || order > 12) throw ConfigError("derivative order must be in 1..12");
  const double o2 = pulse.rabi * pulse.rabi;
  if (o2 == 0.0) return 0.0;
  double acc = 0.0;
  for (int k = 0; k < modes.mode_count(); ++k) {
    const double ee = modes.lamb_dicke(k, pair.first) * modes.lamb_dicke(k, pair.second);
    if (ee == 0.0) continue;
    const double c = rule_coefficient(modes, k, rule);
    const cplx x = ipow(cplx(0.0, -c), order) * lag_moment(pulse, modes.frequencies(k), order);
    acc -= 0.5 * ee * x.imag();
  }
  return pulse.spin_phase_sign * o2 * acc;
}

double displacement_error(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                          std::span<const double> offsets, const ErrorOptions& opt) {
  pair.validate(modes);
  check_offsets(modes, offsets);
  double e = 0.0;
  for (int k = 0; k < modes.mode_count(); ++k) {
    const double w = opt.thermal_weighting ? 2.0 * (modes.thermal_occupation(k) + 0.5) : 1.0;
    const double d = offset_of(offsets, k);
    e += w * (std::norm(displacement(pulse, modes, pair.first, k, d)) +
              std::norm(displacement(pulse, modes, pair.second, k, d)));
  }
  return e;
}

GateMetrics evaluate_metrics(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                             int max_order, const ErrorOptions& opt) {
  pair.validate(modes);
  const int nm = modes.mode_count();
  GateMetrics g;
  g.displacements.resize(nm, 2);
  g.averaged_displacements.resize(nm, 2);
  g.derivatives.assign(static_cast<std::size_t>(std::max(0, max_order)), Eigen::MatrixXcd(nm, 2));
  const int ions[2] = {pair.first, pair.second};
  for (int k = 0; k < nm; ++k)
    for (int s = 0; s < 2; ++s) {
      g.displacements(k, s) = displacement(pulse, modes, ions[s], k);
      g.averaged_displacements(k, s) = averaged_displacement(pulse, modes, ions[s], k);
      for (int m = 1; m <= max_order; ++m)
        g.derivatives[m - 1](k, s) = displacement_derivative(pulse, modes, ions[s], k, m);
    }
  g.rotation_angle = rotation_angle(pulse, modes, pair);
  g.angle_derivative = angle_derivative(pulse, modes, pair, 1);
  g.displacement_error = displacement_error(pulse, modes, pair, {}, opt);
  g.angle_error = (g.rotation_angle - kTargetAngle) * (g.rotation_angle - kTargetAngle);
  return g;
}

std::vector<StaticErrorPoint> static_error_sweep(const FMPulse& pulse, const ModeStructure& modes,
                                                 const IonPair& pair, std::span<const double> deltas,
                                                 const SweepOptions& opt) {
  pair.validate(modes);
  const int nm = modes.mode_count();
  const int mmax = std::max(0, opt.max_order);
  const int ions[2] = {pair.first, pair.second};

  // Derivatives at δ = 0, reused for every offset.
  std::vector<Eigen::MatrixXcd> dalpha(static_cast<std::size_t>(mmax + 1), Eigen::MatrixXcd(nm, 2));
  for (int k = 0; k < nm; ++k)
    for (int s = 0; s < 2; ++s) {
      dalpha[0](k, s) = displacement(pulse, modes, ions[s], k);
      for (int m = 1; m <= mmax; ++m)
        dalpha[m](k, s) = displacement_derivative(pulse, modes, ions[s], k, m);
    }
  std::vector<double> dtheta(static_cast<std::size_t>(mmax + 1), 0.0);
  dtheta[0] = rotation_angle(pulse, modes, pair) - kTargetAngle;
  for (int m = 1; m <= mmax; ++m) dtheta[m] = angle_derivative(pulse, modes, pair, m, opt.rule);

  std::vector<StaticErrorPoint> out;
  out.reserve(deltas.size());
  for (double delta : deltas) {
    StaticErrorPoint p;
    p.delta = delta;
    std::vector<double> off(static_cast<std::size_t>(nm));
    for (int k = 0; k < nm; ++k) off[k] = rule_coefficient(modes, k, opt.rule) * delta;
    p.e_alpha = displacement_error(pulse, modes, pair, off, opt.errors);
    const double th = rotation_angle(pulse, modes, pair, off);
    p.e_theta = (th - kTargetAngle) * (th - kTargetAngle);
    for (int m = 0; m <= mmax; ++m) {
      Eigen::MatrixXd a(nm, 2);
      for (int k = 0; k < nm; ++k)
        for (int s = 0; s < 2; ++s)
          a(k, s) = std::abs(std::pow(off[k], m) / factorial(m) * dalpha[m](k, s));
      p.alpha_orders.push_back(std::move(a));
      p.theta_orders.push_back(std::abs(std::pow(delta, m) / factorial(m) * dtheta[m]));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string static_sweep_csv(const std::vector<StaticErrorPoint>& points) {
  std::ostringstream os;
  os << std::setprecision(12);
  os << "delta_hz,E_alpha,E_Theta,E_total\n";
  for (const auto& p : points)
    os << rad_to_hz(p.delta) << ',' << p.e_alpha << ',' << p.e_theta << ',' << p.e_total() << '\n';
  return os.str();
}

AmplitudeSensitivity amplitude_sensitivity(const FMPulse& pulse, const ModeStructure& modes,
                                           const IonPair& pair) {
  AmplitudeSensitivity s;
  s.dephasing = std::abs(angle_derivative(pulse, modes, pair, 1));
  s.amplitude = std::abs(rotation_angle(pulse, modes, pair)) / modes.com_frequency();
  return s;
}

}  // namespace msff
