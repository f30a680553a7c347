#include "msff/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace msff {

namespace {

// Two-qubit map from the σ_x eigenbasis (columns) to the computational basis.
Eigen::Matrix4cd x_to_z() {
  Eigen::Matrix2cd h;
  h << 1.0, 1.0, 1.0, -1.0;
  h /= std::sqrt(2.0);
  Eigen::Matrix4cd t;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d) t(2 * a + b, 2 * c + d) = h(a, c) * h(b, d);
  return t;
}

double spin_coupling(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair, int k, int s) {
  return modes.lamb_dicke(k, pair.first) * kSpinConfigs[s][0] +
         pulse.spin_phase_sign * modes.lamb_dicke(k, pair.second) * kSpinConfigs[s][1];
}

// Noisy phases and amplitude weights on the uniform sub-grid of `gates` repetitions.
struct SubGrid {
  double h = 0.0;
  std::size_t intervals = 0;
  std::vector<double> common;  // Σ noise terms common to all modes at the nodes: φ(t)
  std::vector<double> drift;   // ∫δ at the nodes (scaled per mode)
  std::vector<double> weight;  // relative amplitude per interval, empty if 1
};

SubGrid build_subgrid(const FMPulse& pulse, const NoiseInput& noise, int gates, int substeps) {
  SubGrid g;
  const std::size_t s = pulse.segment_count();
  g.h = pulse.width() / substeps;
  g.intervals = static_cast<std::size_t>(gates) * s * static_cast<std::size_t>(substeps);
  const std::size_t nodes = g.intervals + 1;
  auto node_time = [&](std::size_t j) { return g.h * static_cast<double>(j); };
  g.common.assign(nodes, 0.0);
  g.drift.assign(nodes, 0.0);
  if (noise.laser_phase)
    for (std::size_t j = 0; j < nodes; ++j) g.common[j] = noise.laser_phase->value(node_time(j));
  if (noise.mode_frequency)
    for (std::size_t j = 0; j < nodes; ++j) g.drift[j] = noise.mode_frequency->integral(node_time(j));
  if (noise.laser_intensity || noise.rabi_offset != 0.0) {
    if (!(pulse.rabi > 0.0)) throw ConfigError("intensity noise needs a pulse with Ω > 0");
    g.weight.assign(g.intervals, 1.0 + noise.rabi_offset);
    if (noise.laser_intensity) {
      double prev = noise.laser_intensity->integral(0.0);
      for (std::size_t j = 0; j < g.intervals; ++j) {
        const double next = noise.laser_intensity->integral(node_time(j + 1));
        g.weight[j] += (next - prev) / (g.h * pulse.rabi);
        prev = next;
      }
    }
  }
  return g;
}

// e^{+iθ_k} on the sub-grid (θ continuous, piecewise linear).
LinearPhase mode_subphase(const FMPulse& pulse, const SubGrid& g, double omega, double offset,
                          double drift_scale, int substeps) {
  LinearPhase p;
  p.width = g.h;
  p.start.resize(g.intervals);
  p.slope.resize(g.intervals);
  const std::size_t s = pulse.segment_count();
  double det = 0.0;  // deterministic part of θ at the current node
  for (std::size_t j = 0; j < g.intervals; ++j) {
    const std::size_t seg = (j / static_cast<std::size_t>(substeps)) % s;
    const double rate = pulse.mu[seg] - omega - offset;
    const double a = det + g.common[j] - drift_scale * g.drift[j];
    det += rate * g.h;
    const double b = det + g.common[j + 1] - drift_scale * g.drift[j + 1];
    p.start[j] = a;
    p.slope[j] = (b - a) / g.h;
  }
  p.weight = g.weight;
  return p;
}

LinearPhase negated(const LinearPhase& p) {
  LinearPhase q = p;
  for (auto& v : q.start) v = -v;
  for (auto& v : q.slope) v = -v;
  return q;
}

Eigen::Matrix4cd assemble(const Eigen::MatrixXcd& beta, const std::array<double, 4>& phase,
                          const Eigen::VectorXd& nbar) {
  Eigen::Matrix4cd rx;
  for (int s = 0; s < 4; ++s)
    for (int t = 0; t < 4; ++t) {
      cplx v = 0.25 * std::polar(1.0, phase[s] - phase[t]);
      for (int k = 0; k < beta.rows(); ++k) {
        const cplx b = beta(k, s), c = beta(k, t);
        const double n = nbar.size() ? nbar(k) : 0.0;
        v *= std::exp(cplx(-(n + 0.5) * std::norm(b - c), (std::conj(c) * b).imag()));
      }
      rx(s, t) = v;
    }
  static const Eigen::Matrix4cd t = x_to_z();
  return t * rx * t.adjoint();
}

}  // namespace

void SimulationConfig::validate() const {
  if (fock_truncation < 4) throw ConfigError("fock_truncation must be at least 4");
  if (substeps < 1) throw ConfigError("substeps must be positive");
  if (gate_counts.empty()) throw ConfigError("gate_counts must not be empty");
  for (std::size_t i = 0; i < gate_counts.size(); ++i) {
    if (gate_counts[i] < 1) throw ConfigError("gate counts must be positive");
    if (i > 0 && gate_counts[i] <= gate_counts[i - 1]) throw ConfigError("gate counts must ascend");
  }
  if (realizations < 1) throw ConfigError("realizations must be positive");
}

std::vector<FinalState> evolve_statevector(const FMPulse& pulse, const ModeStructure& modes,
                                           const IonPair& pair, const NoiseInput& noise,
                                           const SimulationConfig& cfg) {
  cfg.validate();
  pulse.validate();
  pair.validate(modes);
  const int nm = modes.mode_count();
  if (!noise.static_offsets.empty() && noise.static_offsets.size() != static_cast<std::size_t>(nm))
    throw ConfigError("static offsets must have one entry per mode");
  const int gmax = cfg.gate_counts.back();
  const SubGrid g = build_subgrid(pulse, noise, gmax, cfg.substeps);
  std::vector<std::size_t> counts;
  const std::size_t per_gate = pulse.segment_count() * static_cast<std::size_t>(cfg.substeps);
  for (int c : cfg.gate_counts) counts.push_back(per_gate * static_cast<std::size_t>(c));

  const std::size_t nc = counts.size();
  std::vector<Eigen::MatrixXcd> beta(nc, Eigen::MatrixXcd::Zero(nm, 4));
  std::vector<std::array<double, 4>> phase(nc, std::array<double, 4>{});
  const double om = pulse.rabi;
  for (int k = 0; k < nm; ++k) {
    const double r = cfg.mode_rule == OffsetRule::scaled ? modes.scaling(k) : 1.0;
    const double off = noise.static_offsets.empty() ? 0.0 : noise.static_offsets[k];
    const LinearPhase pos = mode_subphase(pulse, g, modes.frequencies(k), off, r, cfg.substeps);
    const LinearPhase neg = negated(pos);
    const auto single = single_integral_prefix(neg, 0, counts);
    const auto dbl = ordered_integral_prefix(neg, 0, pos, 0, counts);
    for (std::size_t c = 0; c < nc; ++c)
      for (int s = 0; s < 4; ++s) {
        const double x = spin_coupling(pulse, modes, pair, k, s);
        beta[c](k, s) = cplx(0.0, -0.5 * om * x) * single[c];
        phase[c][s] += 0.25 * om * om * x * x * dbl[c].imag();
      }
  }
  std::vector<FinalState> out;
  for (std::size_t c = 0; c < nc; ++c) {
    FinalState f;
    f.gates = cfg.gate_counts[c];
    f.displacement = beta[c];
    f.phase = phase[c];
    f.rho = assemble(beta[c], phase[c], modes.thermal_occupation);
    out.push_back(std::move(f));
  }
  return out;
}

Eigen::Matrix4cd evolve_fock(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                             const NoiseInput& noise, int truncation, int steps_per_segment) {
  pulse.validate();
  pair.validate(modes);
  if (truncation < 4) throw ConfigError("fock truncation must be at least 4");
  if (steps_per_segment < 1) throw ConfigError("steps_per_segment must be positive");
  const int nm = modes.mode_count();
  const int n = truncation;
  // One RK4 step per sub-interval; the phase is linear inside each.
  const SubGrid g = build_subgrid(pulse, noise, 1, steps_per_segment);
  for (int k = 0; k < nm; ++k) {
    const double off = noise.static_offsets.empty() ? 0.0 : noise.static_offsets[k];
    const double max_rate = (Eigen::Map<const Eigen::VectorXd>(pulse.mu.data(), pulse.mu.size()).array() -
                             modes.frequencies(k) - off).abs().maxCoeff();
    if (max_rate * g.h > 0.1)
      throw ConfigError("fock integrator step does not resolve the detuning; raise steps_per_segment");
  }
  std::vector<std::vector<Eigen::VectorXcd>> psi(nm, std::vector<Eigen::VectorXcd>(4));
  Eigen::VectorXd sq(n);
  for (int i = 0; i < n; ++i) sq(i) = std::sqrt(static_cast<double>(i));
  for (int k = 0; k < nm; ++k) {
    const double r = modes.scaling(k);
    const double off = noise.static_offsets.empty() ? 0.0 : noise.static_offsets[k];
    const LinearPhase ph = mode_subphase(pulse, g, modes.frequencies(k), off, r, steps_per_segment);
    for (int s = 0; s < 4; ++s) {
      const double x = 0.5 * pulse.rabi * spin_coupling(pulse, modes, pair, k, s);
      Eigen::VectorXcd v = Eigen::VectorXcd::Zero(n);
      v(0) = 1.0;
      // dψ/dt = -i (F a† + F* a) ψ with F = x w e^{-iθ}.
      auto rhs = [&](double theta, double w, const Eigen::VectorXcd& y) {
        const cplx f = x * w * std::polar(1.0, -theta);
        Eigen::VectorXcd d(n);
        for (int m = 0; m < n; ++m) {
          cplx acc(0.0, 0.0);
          if (m > 0) acc += f * sq(m) * y(m - 1);
          if (m + 1 < n) acc += std::conj(f) * sq(m + 1) * y(m + 1);
          d(m) = cplx(0.0, -1.0) * acc;
        }
        return d;
      };
      for (std::size_t j = 0; j < ph.size(); ++j) {
        const double a = ph.start[j], sl = ph.slope[j], h = ph.width, w = ph.amplitude(j);
        const Eigen::VectorXcd k1 = rhs(a, w, v);
        const Eigen::VectorXcd k2 = rhs(a + 0.5 * h * sl, w, v + 0.5 * h * k1);
        const Eigen::VectorXcd k3 = rhs(a + 0.5 * h * sl, w, v + 0.5 * h * k2);
        const Eigen::VectorXcd k4 = rhs(a + h * sl, w, v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      const double leak = std::norm(v(n - 1));
      if (leak > 1e-8) {
        std::ostringstream os;
        os << "fock truncation " << n << " too small: top-level population " << leak << " in mode " << k;
        throw NumericalError(os.str());
      }
      psi[k][s] = v;
    }
  }
  Eigen::Matrix4cd rx;
  for (int s = 0; s < 4; ++s)
    for (int t = 0; t < 4; ++t) {
      cplx v = 0.25;
      for (int k = 0; k < nm; ++k) v *= psi[k][t].dot(psi[k][s]);
      rx(s, t) = v;
    }
  static const Eigen::Matrix4cd t = x_to_z();
  return t * rx * t.adjoint();
}

SequencePoint sequence_point(const Eigen::Matrix4cd& rho, int gates) {
  SequencePoint p;
  p.gates = gates;
  p.populations = rho(1, 1).real() + rho(2, 2).real();
  p.contrast = 2.0 * std::abs(rho(0, 3));
  p.eps = 0.5 * (p.populations + 1.0 - p.contrast);
  return p;
}

double extracted_angle(const Eigen::Matrix4cd& rho) {
  return std::atan2(std::sqrt(std::max(rho(3, 3).real(), 0.0)), std::sqrt(std::max(rho(0, 0).real(), 0.0)));
}

GateErrorReport extract_gate_error(const std::vector<SequencePoint>& points) {
  GateErrorReport r;
  r.points = points;
  const std::size_t n = points.size();
  if (n < 2) throw ConfigError("the linear fit needs at least two sequence lengths");
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.gates;
    my += p.eps;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : points) {
    sxx += (p.gates - mx) * (p.gates - mx);
    sxy += (p.gates - mx) * (p.eps - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("the linear fit needs at least two distinct gate counts");
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  if (n > 2) {
    double rss = 0.0;
    for (const auto& p : points) {
      const double e = p.eps - r.intercept - r.slope * p.gates;
      rss += e * e;
    }
    r.slope_std = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  }
  r.e_alpha = points.front().populations;
  r.e_theta = 0.5 * (1.0 - points.front().contrast - points.front().populations);
  return r;
}

std::string sequence_csv(const std::vector<SequencePoint>& points) {
  std::ostringstream os;
  os << std::setprecision(12) << "gate_count,eps,p01p10,one_minus_c\n";
  for (const auto& p : points)
    os << p.gates << ',' << p.eps << ',' << p.populations << ',' << 1.0 - p.contrast << '\n';
  return os.str();
}

MonteCarloReport monte_carlo_error(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                                   const NoisePSD& psd, NoiseChannel channel, const SimulationConfig& cfg) {
  cfg.validate();
  std::vector<NoiseComponent> comps;
  if (psd.has_continuum()) {
    const auto [lo, hi] = prediction_band(psd, cfg.synthesis);
    comps = synthesis_components(psd, lo, hi, cfg.synthesis.per_decade, cfg.synthesis.peak_points);
  } else {
    comps = synthesis_components(psd, 0.0, 0.0);
  }
  const std::size_t nc = cfg.gate_counts.size();
  MonteCarloReport rep;
  rep.realizations = cfg.realizations;
  rep.gate_counts = cfg.gate_counts;
  std::vector<double> sum(nc, 0.0), sum2(nc, 0.0);
  double sa = 0.0, sa2 = 0.0, st = 0.0, st2 = 0.0;
  for (int i = 0; i < cfg.realizations; ++i) {
    auto rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(i));
    const NoiseRealization real(comps, rng);
    NoiseInput in;
    switch (channel) {
      case NoiseChannel::mode_frequency:
        in.mode_frequency = &real;
        break;
      case NoiseChannel::laser_phase:
        in.laser_phase = &real;
        break;
      case NoiseChannel::laser_intensity:
        in.laser_intensity = &real;
        break;
    }
    const auto states = evolve_statevector(pulse, modes, pair, in, cfg);
    for (std::size_t c = 0; c < nc; ++c) {
      const SequencePoint p = sequence_point(states[c].rho, states[c].gates);
      sum[c] += p.eps;
      sum2[c] += p.eps * p.eps;
      if (c == 0) {
        rep.samples.push_back(p.eps);
        const double ea = p.populations, et = 0.5 * (1.0 - p.contrast - p.populations);
        sa += ea;
        sa2 += ea * ea;
        st += et;
        st2 += et * et;
      }
    }
  }
  const double n = cfg.realizations;
  auto moments = [n](double s, double s2, double& mean, double& se, double* sd) {
    mean = s / n;
    const double var = n > 1 ? std::max(0.0, (s2 - n * mean * mean) / (n - 1)) : 0.0;
    se = std::sqrt(var / n);
    if (sd) *sd = std::sqrt(var);
  };
  rep.mean_eps.resize(nc);
  rep.stderr_eps.resize(nc);
  rep.std_eps.resize(nc);
  for (std::size_t c = 0; c < nc; ++c) moments(sum[c], sum2[c], rep.mean_eps[c], rep.stderr_eps[c], &rep.std_eps[c]);
  moments(sa, sa2, rep.mean_e_alpha, rep.stderr_e_alpha, nullptr);
  moments(st, st2, rep.mean_e_theta, rep.stderr_e_theta, nullptr);
  if (nc >= 2) {
    std::vector<SequencePoint> pts;
    for (std::size_t c = 0; c < nc; ++c) pts.push_back({cfg.gate_counts[c], rep.mean_eps[c], 0.0, 0.0});
    rep.fit = extract_gate_error(pts);
  }
  return rep;
}

double static_average_prediction(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                                 const NoisePSD& psd, OffsetRule rule) {
  // Gauss-Hermite nodes for ∫ e^{-x²} g(x) dx by Golub-Welsch.
  constexpr int n = 48;
  static const auto nodes = [] {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) j(i, i - 1) = j(i - 1, i) = std::sqrt(i / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    std::vector<std::pair<double, double>> out;
    for (int i = 0; i < n; ++i) {
      const double v = es.eigenvectors()(0, i);
      out.emplace_back(es.eigenvalues()(i), std::sqrt(kPi) * v * v);
    }
    return out;
  }();
  const double sigma = std::sqrt(psd.variance());
  SimulationConfig cfg;
  cfg.gate_counts = {1};
  double acc = 0.0;
  for (const auto& [x, w] : nodes) {
    const double delta = std::sqrt(2.0) * sigma * x;
    NoiseInput in;
    in.static_offsets.resize(modes.mode_count());
    for (int k = 0; k < modes.mode_count(); ++k)
      in.static_offsets[k] = delta * (rule == OffsetRule::scaled ? modes.scaling(k) : 1.0);
    const auto st = evolve_statevector(pulse, modes, pair, in, cfg);
    acc += w * sequence_point(st.front().rho, 1).eps;
  }
  return acc / std::sqrt(kPi);
}

}  // namespace msff
