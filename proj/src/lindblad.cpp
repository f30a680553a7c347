#include "msff/lindblad.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>

namespace msff {

namespace {

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

// One mode with the two qubits, ρ indexed (s N + n, t N + m) in the σ_x basis.
class ModePass {
 public:
  ModePass(int truncation, std::array<double, 4> coupling, double gamma, double laser_rate)
      : n_(truncation), x_(coupling), gamma_(gamma), laser_(laser_rate), sq_(truncation + 1) {
    for (int i = 0; i <= n_; ++i) sq_[i] = std::sqrt(static_cast<double>(i));
  }

  // dρ/dt with the drive F = f a† + f* a per spin block.
  void rhs(cplx f, const Eigen::MatrixXcd& r, Eigen::MatrixXcd& out) const {
    const int d = 4 * n_;
    Eigen::MatrixXcd hr(d, d);
    for (int s = 0; s < 4; ++s)
      for (int n = 0; n < n_; ++n) {
        const int row = s * n_ + n;
        const cplx up = n > 0 ? x_[s] * f * sq_[n] : cplx(0.0);
        const cplx dn = n + 1 < n_ ? x_[s] * std::conj(f) * sq_[n + 1] : cplx(0.0);
        for (int c = 0; c < d; ++c) {
          cplx v(0.0, 0.0);
          if (n > 0) v += up * r(row - 1, c);
          if (n + 1 < n_) v += dn * r(row + 1, c);
          hr(row, c) = v;
        }
      }
    // -i[H, ρ] with ρ H = (H ρ)†.
    out = cplx(0.0, -1.0) * (hr - hr.adjoint());
    if (gamma_ > 0.0) {
      for (int s = 0; s < 4; ++s)
        for (int t = 0; t < 4; ++t)
          for (int n = 0; n < n_; ++n)
            for (int m = 0; m < n_; ++m) {
              const int i = s * n_ + n, j = t * n_ + m;
              // a a† is truncated too, which keeps the trace.
              cplx v = -0.5 * (ladder_sum(n) + ladder_sum(m)) * r(i, j);
              if (n > 0 && m > 0) v += sq_[n] * sq_[m] * r(i - 1, j - 1);
              if (n + 1 < n_ && m + 1 < n_) v += sq_[n + 1] * sq_[m + 1] * r(i + 1, j + 1);
              out(i, j) += gamma_ * v;
            }
    }
    if (laser_ > 0.0) {
      // L = (σz1 + σz2) √rate; σz_j flips bit j of the σ_x configuration.
      for (int s = 0; s < 4; ++s)
        for (int t = 0; t < 4; ++t)
          for (int n = 0; n < n_; ++n)
            for (int m = 0; m < n_; ++m) {
              auto at = [&](int a, int b) { return r(a * n_ + n, b * n_ + m); };
              cplx v = at(s ^ 2, t ^ 2) + at(s ^ 2, t ^ 1) + at(s ^ 1, t ^ 2) + at(s ^ 1, t ^ 1);
              v -= 2.0 * at(s, t) + at(s ^ 3, t) + at(s, t ^ 3);
              out(s * n_ + n, t * n_ + m) += laser_ * v;
            }
    }
  }

  double ladder_sum(int n) const { return n + 1 < n_ ? 2.0 * n + 1.0 : static_cast<double>(n); }

  double top_population(const Eigen::MatrixXcd& r) const {
    double p = 0.0;
    for (int s = 0; s < 4; ++s) p += r(s * n_ + n_ - 1, s * n_ + n_ - 1).real();
    return p;
  }

  Eigen::Matrix4cd trace_mode(const Eigen::MatrixXcd& r) const {
    Eigen::Matrix4cd out = Eigen::Matrix4cd::Zero();
    for (int s = 0; s < 4; ++s)
      for (int t = 0; t < 4; ++t)
        for (int n = 0; n < n_; ++n) out(s, t) += r(s * n_ + n, t * n_ + n);
    return out;
  }

  Eigen::MatrixXcd attach(const Eigen::Matrix4cd& spin, double nbar) const {
    Eigen::VectorXd pn(n_);
    const double q = nbar / (1.0 + nbar);
    for (int n = 0; n < n_; ++n) pn(n) = std::pow(q, n) / (1.0 + nbar);
    pn /= pn.sum();
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(4 * n_, 4 * n_);
    for (int s = 0; s < 4; ++s)
      for (int t = 0; t < 4; ++t)
        for (int n = 0; n < n_; ++n) r(s * n_ + n, t * n_ + n) = spin(s, t) * pn(n);
    return r;
  }

 private:
  int n_;
  std::array<double, 4> x_;
  double gamma_, laser_;
  std::vector<double> sq_;
};

std::array<double, 4> spin_couplings(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair, int k) {
  std::array<double, 4> x{};
  for (int c = 0; c < 4; ++c)
    x[c] = modes.lamb_dicke(k, pair.first) * kSpinConfigs[c][0] +
           pulse.spin_phase_sign * modes.lamb_dicke(k, pair.second) * kSpinConfigs[c][1];
  return x;
}

// Heating at equal up/down rates acts like a white classical force ξ(t) with
// <ξ(t) ξ*(s)> = Γ δ(t - s). For branch displacements x_c F(t), F = -i ∫ f:
//   ρ_cc' ∝ exp(-i (x_c² - x_c'²) P) <D(Δx F_T)> exp(-Γ Δx² ∫ |F - F_T|² dt),
// with P = ∫ Re(F* f) dt.
LindbladResult evolve_closed_form(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                                  const DissipationRates& rates, const LindbladConfig& cfg) {
  static const Eigen::Matrix4cd tz = x_to_z();
  constexpr int kNodes = 16;
  static const auto gl = [] {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(kNodes, kNodes);
    for (int i = 1; i < kNodes; ++i) j(i, i - 1) = j(i - 1, i) = i / std::sqrt(4.0 * i * i - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    std::vector<std::pair<double, double>> out;
    for (int i = 0; i < kNodes; ++i)
      out.emplace_back(0.5 * (es.eigenvalues()(i) + 1.0), std::pow(es.eigenvectors()(0, i), 2));
    return out;
  }();
  const int nm = modes.mode_count();
  const std::size_t s = pulse.segment_count();
  const double w = pulse.width(), amp = 0.5 * pulse.rabi;
  const int last = cfg.gate_counts.back();

  LindbladResult res;
  res.gate_counts = cfg.gate_counts;
  std::vector<Eigen::Matrix4cd> spin(cfg.gate_counts.size(), Eigen::Matrix4cd::Constant(cplx(0.25, 0.0)));
  for (int k = 0; k < nm; ++k) {
    const auto x = spin_couplings(pulse, modes, pair, k);
    const double gamma = rates.heating.empty() ? 0.0 : rates.heating[k];
    const double nbar = modes.thermal_occupation.size() ? modes.thermal_occupation(k) : 0.0;
    cplx big_f = 0.0, int_f = 0.0;
    double int_ff = 0.0, p = 0.0, theta = 0.0, t = 0.0;
    std::size_t next = 0;
    for (int g = 1; g <= last; ++g) {
      for (std::size_t seg = 0; seg < s; ++seg) {
        const double rate = pulse.mu[seg] - modes.frequencies(k);
        const cplx e0 = std::polar(1.0, -theta);
        // F(u) within the segment; rate is never zero for a valid pulse.
        auto field = [&](double u) { return big_f - amp * e0 * (1.0 - std::polar(1.0, -rate * u)) / rate; };
        for (const auto& [xi, wi] : gl) {
          const double u = xi * w;
          const cplx fu = field(u);
          const cplx drive = amp * e0 * std::polar(1.0, -rate * u);
          int_ff += wi * w * std::norm(fu);
          int_f += wi * w * fu;
          p += wi * w * std::real(std::conj(fu) * drive);
        }
        big_f = field(w);
        theta += rate * w;
        t += w;
      }
      if (next < cfg.gate_counts.size() && g == cfg.gate_counts[next]) {
        const double wander = int_ff - 2.0 * std::real(std::conj(big_f) * int_f) + t * std::norm(big_f);
        for (int c = 0; c < 4; ++c)
          for (int d = 0; d < 4; ++d) {
            const double dx = x[c] - x[d];
            const double decay = (nbar + 0.5) * dx * dx * std::norm(big_f) + gamma * dx * dx * wander;
            spin[next](c, d) *= std::polar(std::exp(-decay), -(x[c] * x[c] - x[d] * x[d]) * p);
          }
        ++next;
      }
    }
  }
  for (const auto& r : spin) res.rho.push_back(tz * r * tz.adjoint());
  return res;
}

}  // namespace

void DissipationRates::validate(int mode_count) const {
  if (!heating.empty() && heating.size() != static_cast<std::size_t>(mode_count))
    throw ConfigError("heating rates need one entry per mode");
  for (double g : heating)
    if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("heating rates must be finite and non-negative");
  if (!(laser_coherence > 0.0)) throw ConfigError("laser coherence time must be positive");
}

DissipationRates default_rates(const ModeStructure& modes) {
  DissipationRates r;
  r.heating.assign(modes.mode_count(), 5.0);
  r.heating[modes.com_index] = 614.0;
  r.laser_coherence = 0.496;
  return r;
}

void LindbladConfig::validate() const {
  if (truncation < 4) throw ConfigError("truncation must be at least 4");
  if (steps_per_segment < 1) throw ConfigError("steps_per_segment must be positive");
  if (gate_counts.empty()) throw ConfigError("gate_counts must not be empty");
  for (std::size_t i = 0; i < gate_counts.size(); ++i)
    if (gate_counts[i] < 1 || (i > 0 && gate_counts[i] <= gate_counts[i - 1]))
      throw ConfigError("gate counts must be positive and ascending");
}

LindbladResult evolve_lindblad(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                               const DissipationRates& rates, const LindbladConfig& cfg) {
  pulse.validate();
  pair.validate(modes);
  cfg.validate();
  const int nm = modes.mode_count();
  rates.validate(nm);
  const double h = pulse.width() / cfg.steps_per_segment;
  for (int k = 0; k < nm; ++k)
    for (double mu : pulse.mu)
      if (std::abs(mu - modes.frequencies(k)) * h > 0.1)
        throw ConfigError("Lindblad step does not resolve the detuning; raise steps_per_segment");
  const double laser = std::isfinite(rates.laser_coherence) ? 1.0 / (rates.laser_coherence * nm) : 0.0;
  if (laser == 0.0 && cfg.closed_form) return evolve_closed_form(pulse, modes, pair, rates, cfg);
  const std::size_t s = pulse.segment_count();

  LindbladResult res;
  res.gate_counts = cfg.gate_counts;
  static const Eigen::Matrix4cd tz = x_to_z();
  for (int gates : cfg.gate_counts) {
    // |00> is the uniform superposition of the four σ_x configurations.
    Eigen::Matrix4cd spin = Eigen::Matrix4cd::Constant(cplx(0.25, 0.0));
    for (int k = 0; k < nm; ++k) {
      const auto x = spin_couplings(pulse, modes, pair, k);
      const double gamma = rates.heating.empty() ? 0.0 : rates.heating[k];
      const ModePass pass(cfg.truncation, x, gamma, laser);
      const double nbar = modes.thermal_occupation.size() ? modes.thermal_occupation(k) : 0.0;
      Eigen::MatrixXcd r = pass.attach(spin, nbar);
      Eigen::MatrixXcd k1, k2, k3, k4, tmp;
      const double amp = 0.5 * pulse.rabi;
      double theta = 0.0;
      for (int g = 0; g < gates; ++g)
        for (std::size_t seg = 0; seg < s; ++seg) {
          const double rate = pulse.mu[seg] - modes.frequencies(k);
          for (int j = 0; j < cfg.steps_per_segment; ++j) {
            const cplx f0 = amp * std::polar(1.0, -theta);
            const cplx fm = amp * std::polar(1.0, -(theta + 0.5 * h * rate));
            const cplx f1 = amp * std::polar(1.0, -(theta + h * rate));
            pass.rhs(f0, r, k1);
            tmp = r + 0.5 * h * k1;
            pass.rhs(fm, tmp, k2);
            tmp = r + 0.5 * h * k2;
            pass.rhs(fm, tmp, k3);
            tmp = r + h * k3;
            pass.rhs(f1, tmp, k4);
            r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            theta += h * rate;
          }
        }
      res.top_population = std::max(res.top_population, pass.top_population(r));
      spin = pass.trace_mode(r);
    }
    res.rho.push_back(tz * spin * tz.adjoint());
  }
  if (res.top_population > cfg.max_top_population)
    throw NumericalError("Fock truncation not converged: top-level population " +
                         std::to_string(res.top_population) + "; raise truncation");
  return res;
}

double BudgetEntry::total() const {
  return (std::isfinite(dephasing_mc) ? dephasing_mc : dephasing) + heating + laser;
}

namespace {

std::pair<double, double> sequence_slope(const LindbladResult& r) {
  std::vector<SequencePoint> pts;
  for (std::size_t i = 0; i < r.rho.size(); ++i) pts.push_back(sequence_point(r.rho[i], r.gate_counts[i]));
  const GateErrorReport fit = extract_gate_error(pts);
  return {fit.slope, fit.slope_std};
}

}  // namespace

BudgetEntry error_budget(const std::string& label, const FMPulse& pulse, const ModeStructure& modes,
                         const IonPair& pair, const NoisePSD& psd, const BudgetOptions& opt) {
  BudgetEntry e;
  e.label = label;
  e.dephasing = predict_error(pulse, modes, pair, psd, NoiseChannel::mode_frequency).e_total();
  if (opt.realizations > 0) {
    SimulationConfig sc;
    sc.gate_counts = opt.lindblad.gate_counts;
    sc.realizations = opt.realizations;
    sc.seed = opt.seed;
    const MonteCarloReport mc = monte_carlo_error(pulse, modes, pair, psd, NoiseChannel::mode_frequency, sc);
    if (mc.fit) {
      e.dephasing_mc = mc.fit->slope;
      e.dephasing_mc_std = mc.fit->slope_std;
    } else {
      e.dephasing_mc = mc.mean_eps.front();
      e.dephasing_mc_std = mc.stderr_eps.front();
    }
  }
  // The ideal sequence is subtracted so each column holds only its own channel.
  DissipationRates none;
  const auto [base, base_std] = sequence_slope(evolve_lindblad(pulse, modes, pair, none, opt.lindblad));
  DissipationRates heat;
  heat.heating = opt.rates.heating;
  const auto [hs, hstd] = sequence_slope(evolve_lindblad(pulse, modes, pair, heat, opt.lindblad));
  DissipationRates las;
  las.laser_coherence = opt.rates.laser_coherence;
  const auto [ls, lstd] = sequence_slope(evolve_lindblad(pulse, modes, pair, las, opt.lindblad));
  e.heating = hs - base;
  e.heating_std = std::hypot(hstd, base_std);
  e.laser = ls - base;
  e.laser_std = std::hypot(lstd, base_std);
  return e;
}

std::string budget_table(const std::vector<BudgetEntry>& entries) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << std::left << std::setw(16) << "pulse" << std::right << std::setw(14) << "dephasing(%)" << std::setw(14)
     << "heating(%)" << std::setw(14) << "laser(%)" << std::setw(14) << "total(%)" << '\n';
  for (const auto& e : entries) {
    const double d = std::isfinite(e.dephasing_mc) ? e.dephasing_mc : e.dephasing;
    os << std::left << std::setw(16) << e.label << std::right << std::setw(14) << 100.0 * d << std::setw(14)
       << 100.0 * e.heating << std::setw(14) << 100.0 * e.laser << std::setw(14) << 100.0 * e.total() << '\n';
  }
  return os.str();
}

std::string budget_csv(const std::vector<BudgetEntry>& entries) {
  std::ostringstream os;
  os << std::setprecision(10)
     << "pulse,dephasing_predicted,dephasing_mc,dephasing_mc_std,heating,heating_std,laser,laser_std,total\n";
  for (const auto& e : entries)
    os << e.label << ',' << e.dephasing << ',' << e.dephasing_mc << ',' << e.dephasing_mc_std << ',' << e.heating
       << ',' << e.heating_std << ',' << e.laser << ',' << e.laser_std << ',' << e.total() << '\n';
  return os.str();
}

}  // namespace msff
