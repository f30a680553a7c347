// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "msff/lindblad.hpp"
#include "msff/optimizer.hpp"
#include "msff/simulator.hpp"
#include "msff/spectroscopy.hpp"
#include "oracles.hpp"

using namespace msff;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*e", digits - 1, v);
  return buf;
}

// Desk configuration: default 5-ion chain, ions 2-3, 150 us, 40 segments.
struct Desk {
  TrapConfig trap;
  ModeStructure modes;
  IonPair pair{1, 2};
  std::optional<FMPulse> robust1, robust2;
  std::map<double, FMPulse> ff;  // keyed by f_c

  Desk() : modes(lamb_dicke(normal_modes(trap), trap)) {}

  const FMPulse& robust_fm_1() {
    if (!robust1) robust1 = optimize(OptimizerConfig{}, modes, pair).pulse;
    return *robust1;
  }
  const FMPulse& robust_fm_2() {
    if (!robust2) {
      OptimizerConfig c;
      c.method = Method::robust_fm_2;
      robust2 = optimize(c, modes, pair).pulse;
    }
    return *robust2;
  }
  static NoisePSD psd_at(double fc) {
    PsdSpec s;
    s.center = fc;
    return build_psd(s);
  }
  const FMPulse& ff_opt(double fc) {
    auto it = ff.find(fc);
    if (it == ff.end()) {
      OptimizerConfig c;
      c.method = Method::ff_opt;
      c.psd = psd_at(fc);
      it = ff.emplace(fc, optimize(c, modes, pair).pulse).first;
    }
    return it->second;
  }
};

// ---- dense quadrature oracles ------------------------------------------------
// Gauss-Legendre panels aligned with the segments; phases from prefix sums.
class Dense {
 public:
  Dense(const FMPulse& p, const ModeStructure& m, int panels = 2) : p_(p), m_(m) {
    rule_ = oracle::gauss_legendre(12);
    const int s = static_cast<int>(p.segment_count());
    for (int i = 0; i < s; ++i)
      for (int q = 0; q < panels; ++q) edges_.push_back(p.boundary(i) + q * p.width() / panels);
    edges_.push_back(p.duration);
    for (std::size_t e = 0; e + 1 < edges_.size(); ++e) {
      const double a = edges_[e], b = edges_[e + 1];
      for (std::size_t k = 0; k < rule_.x.size(); ++k) {
        t_.push_back(a + 0.5 * (b - a) * (rule_.x[k] + 1.0));
        w_.push_back(0.5 * (b - a) * rule_.w[k]);
      }
    }
    for (double t : t_) th_.push_back(phases(t));
  }

  std::vector<double> phases(double t) const {
    std::vector<double> out(m_.mode_count());
    const double w = p_.width();
    const int i = std::min(static_cast<int>(t / w), static_cast<int>(p_.segment_count()) - 1);
    for (int k = 0; k < m_.mode_count(); ++k) {
      double acc = 0.0;
      for (int j = 0; j < i; ++j) acc += (p_.mu[j] - m_.frequencies(k)) * w;
      out[k] = acc + (p_.mu[i] - m_.frequencies(k)) * (t - i * w);
    }
    return out;
  }

  /// ∫ f(t, θ(t)) dt.
  cplx single(const std::function<cplx(double, const std::vector<double>&)>& f) const {
    cplx s = 0.0;
    for (std::size_t q = 0; q < t_.size(); ++q) s += w_[q] * f(t_[q], th_[q]);
    return s;
  }

  /// ∫_0^τ dt1 ∫_0^t1 dt2 f(t1, θ(t1), t2, θ(t2)).
  cplx ordered(const std::function<cplx(double, const std::vector<double>&, double, const std::vector<double>&)>& f)
      const {
    const std::size_t n = rule_.x.size();
    cplx total = 0.0;
    for (std::size_t e = 0; e + 1 < edges_.size(); ++e) {
      const double a = edges_[e];
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t q1 = e * n + k;
        const double t1 = t_[q1];
        cplx inner = 0.0;
        for (std::size_t q2 = 0; q2 < e * n; ++q2) inner += w_[q2] * f(t1, th_[q1], t_[q2], th_[q2]);
        for (std::size_t j = 0; j < n; ++j) {
          const double t2 = a + 0.5 * (t1 - a) * (rule_.x[j] + 1.0);
          inner += 0.5 * (t1 - a) * rule_.w[j] * f(t1, th_[q1], t2, phases(t2));
        }
        total += w_[q1] * inner;
      }
    }
    return total;
  }

 private:
  const FMPulse& p_;
  const ModeStructure& m_;
  oracle::Rule rule_;
  std::vector<double> edges_, t_, w_;
  std::vector<std::vector<double>> th_;
};

FMPulse random_desk_pulse(std::mt19937_64& rng, bool symmetric) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ur(30e3, 90e3);
  const double rabi = hz_to_rad(ur(rng));
  if (symmetric) {
    std::vector<double> half;
    for (int i = 0; i < 20; ++i) half.push_back(hz_to_rad(2.22e6 + 8e4 * nd(rng)));
    return build_symmetric_pulse(half, 150e-6, rabi);
  }
  FMPulse p;
  p.duration = 150e-6;
  p.rabi = rabi;
  for (int i = 0; i < 40; ++i) p.mu.push_back(hz_to_rad(2.22e6 + 8e4 * nd(rng)));
  return p;
}

std::vector<FMPulse> random_pulses(int n, std::uint64_t seed, bool mixed = true) {
  std::mt19937_64 rng(seed);
  std::vector<FMPulse> out;
  for (int i = 0; i < n; ++i) out.push_back(random_desk_pulse(rng, mixed && i % 2 == 0));
  return out;
}

double rel(cplx a, cplx b) { return oracle::rel_err(a, b); }

// ---- criteria ------------------------------------------------------------------

Outcome c1_closed_form(Desk& d) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto pulses = random_pulses(100, 101);
  const ModeStructure& m = d.modes;
  const int j1 = d.pair.first, j2 = d.pair.second;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uf(-5e4, 5e4);
  std::map<std::string, double> worst;
  for (const auto& p : pulses) {
    const Dense q(p, m);
    const double tau = p.duration;
    for (int k = 0; k < m.mode_count(); ++k) {
      const cplx i1 = q.single([&](double, const std::vector<double>& th) { return std::polar(1.0, -th[k]); });
      // Time average of the running displacement.
      const cplx avg = q.ordered([&](double, const std::vector<double>&, double, const std::vector<double>& th2) {
                         return std::polar(1.0, -th2[k]);
                       }) /
                       tau;
      for (int j : {j1, j2}) {
        const double pre = 0.5 * p.rabi * m.lamb_dicke(k, j);
        worst["alpha"] = std::max(worst["alpha"], rel(displacement(p, m, j, k), pre * i1));
        worst["alpha_bar"] = std::max(worst["alpha_bar"], rel(averaged_displacement(p, m, j, k), pre * avg));
      }
    }
    const cplx th = q.ordered([&](double, const std::vector<double>& a, double, const std::vector<double>& b) {
      cplx s = 0.0;
      for (int k = 0; k < m.mode_count(); ++k)
        s += 0.5 * m.lamb_dicke(k, j1) * m.lamb_dicke(k, j2) * std::polar(1.0, a[k] - b[k]);
      return s;
    });
    worst["Theta"] = std::max(worst["Theta"], rel(rotation_angle(p, m, d.pair), -p.rabi * p.rabi * th.imag()));

    const double f = uf(rng), w = kTwoPi * f;
    const FilterKernel kern(p, m, d.pair);
    double fa = 0.0, ga = 0.0;
    for (int k = 0; k < m.mode_count(); ++k) {
      const cplx ik = q.single([&](double t, const std::vector<double>& th2) { return std::polar(1.0, w * t - th2[k]); });
      const double e2 = std::pow(m.lamb_dicke(k, j1), 2) + std::pow(m.lamb_dicke(k, j2), 2);
      fa += p.rabi * p.rabi * e2 * std::norm(0.5 * m.scaling(k) * ik);
      ga += p.rabi * p.rabi * e2 * std::norm(0.5 * ik);
    }
    worst["F_alpha"] = std::max(worst["F_alpha"], rel(kern.f_alpha(f), fa));
    worst["G_alpha"] = std::max(worst["G_alpha"], rel(kern.g_alpha(f), ga));
    const cplx ft = q.ordered([&](double t1, const std::vector<double>& a, double t2, const std::vector<double>& b) {
      double c = 0.0;
      for (int k = 0; k < m.mode_count(); ++k)
        c += 0.5 * m.scaling(k) * m.lamb_dicke(k, j1) * m.lamb_dicke(k, j2) * std::cos(a[k] - b[k]);
      return c * (std::polar(1.0, w * t1) - std::polar(1.0, w * t2));
    });
    const cplx gt = q.ordered([&](double t1, const std::vector<double>& a, double t2, const std::vector<double>& b) {
      double s = 0.0;
      for (int k = 0; k < m.mode_count(); ++k) s += m.lamb_dicke(k, j1) * m.lamb_dicke(k, j2) * std::sin(a[k] - b[k]);
      return s * (std::polar(1.0, w * t1) + std::polar(1.0, w * t2));
    });
    const double o4 = std::pow(p.rabi, 4);
    worst["F_Theta"] = std::max(worst["F_Theta"], rel(kern.f_theta(f), o4 * std::norm(ft)));
    worst["G_Theta"] = std::max(worst["G_Theta"], rel(kern.g_theta(f), 0.25 * o4 * std::norm(gt)));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double top = 0.0;
  std::ostringstream os;
  for (const auto& [name, v] : worst) {
    top = std::max(top, v);
    os << name << ' ' << sci(v, 2) << ", ";
  }
  os << "100 pulses in " << std::lround(secs) << " s";
  return {top < 1e-7 && secs < 300.0, os.str()};
}

Outcome c2_derivative_identity(Desk& d) {
  double worst = 0.0;
  for (const auto& p : random_pulses(100, 101)) {
    for (int k = 0; k < d.modes.mode_count(); ++k)
      for (int j : {d.pair.first, d.pair.second}) {
        const cplx lhs = displacement_derivative(p, d.modes, j, k, 1);
        const cplx rhs =
            cplx(0.0, p.duration) * (displacement(p, d.modes, j, k) - averaged_displacement(p, d.modes, j, k));
        worst = std::max(worst, rel(lhs, rhs));
      }
  }
  return {worst < 1e-12, "worst relative deviation " + sci(worst, 2) + " over 100 pulses"};
}

double low_f_ratio(const FMPulse& p, const Desk& d, double x) {
  const double f = x / p.duration;
  const double lhs = FilterKernel(p, d.modes, d.pair).f_theta(f) / (f * f);
  return lhs / std::pow(kTwoPi * angle_derivative(p, d.modes, d.pair, 1), 2);
}

Outcome c3_low_frequency_limit(Desk& d) {
  // Designed pulses at f = 0.01/tau. Random pulses sometimes have dTheta/ddelta
  // accidentally near zero, so the next order still shows at 0.01/tau; for
  // those the limit itself is checked one decade lower.
  double designed = 0.0, generic = 0.0;
  for (const FMPulse* p : {&d.robust_fm_1(), &d.robust_fm_2(), &d.ff_opt(10e3)})
    designed = std::max(designed, std::abs(low_f_ratio(*p, d, 1e-2) - 1.0));
  for (const auto& p : random_pulses(20, 303, false))
    generic = std::max(generic, std::abs(low_f_ratio(p, d, 1e-3) - 1.0));
  return {designed < 0.01 && generic < 0.01, "designed pulses at 0.01/tau " + sci(designed, 2) +
                                                 ", 20 random pulses at 0.001/tau " + sci(generic, 2)};
}

Outcome c4_static_identity(Desk& d) {
  double worst = 0.0;
  auto pulses = random_pulses(2, 404);
  pulses.push_back(d.robust_fm_1());
  for (const auto& p : pulses) {
    const FilterKernel k(p, d.modes, d.pair);
    for (int i = 0; i < 20; ++i) {
      const double f = -2e4 + 2.1e3 * i + 13.0;
      const std::vector<double> off(d.modes.mode_count(), kTwoPi * f);
      worst = std::max(worst, rel(k.f_alpha(f, true), displacement_error(p, d.modes, d.pair, off)));
    }
  }
  return {worst < 1e-10, "worst relative deviation " + sci(worst, 2) + " at 20 frequencies x 3 pulses"};
}

Outcome c5_intensity_identities(Desk& d) {
  double worst_g = 0.0;
  const FMPulse& rp = d.robust_fm_1();
  auto pulses = random_pulses(5, 505);
  pulses.push_back(rp);
  for (const auto& p : pulses) {
    const FilterKernel k(p, d.modes, d.pair);
    for (double f : {-3e4, -700.0, 0.0, 450.0, 9e3, 4.1e4})
      worst_g = std::max(worst_g, rel(g_alpha(p, d.modes, d.pair, f), k.f_alpha(f, true)));
  }
  const double g0 = g_theta(rp, d.modes, d.pair, 0.0);
  const double theta = rotation_angle(rp, d.modes, d.pair);
  const double dev0 = std::max(std::abs(g0 - 4.0 * theta * theta), std::abs(g0 - kPi * kPi / 4.0));
  NoiseInput noise;
  noise.rabi_offset = 0.01;
  SimulationConfig sc;
  sc.gate_counts = {1};
  const auto st = evolve_statevector(rp, d.modes, d.pair, noise, sc);
  const double ratio = extracted_angle(st[0].rho) / kTargetAngle;
  const double dev_r = std::abs(ratio - 1.01 * 1.01);
  std::ostringstream os;
  os << "G_alpha vs F_alpha(r=1) " << sci(worst_g, 2) << ", |G_Theta(0) - pi^2/4| " << sci(dev0, 2)
     << ", Theta ratio at eps=0.01 " << ratio << " (dev " << sci(dev_r, 2) << ")";
  return {worst_g < 1e-12 && dev0 < 1e-6 && dev_r < 1e-4, os.str()};
}

Outcome c6_gradient_audit(Desk& d) {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    FMPulse p;
    p.duration = 150e-6;
    p.rabi = 1.0;
    for (int i = 0; i < 40; ++i) p.mu.push_back(hz_to_rad(2.10e6 + 2e4 * nd(rng)));
    p.spin_phase_sign = natural_spin_sign(p, d.modes, d.pair);
    std::vector<std::pair<OptimizerConfig, std::vector<double>>> cases;
    OptimizerConfig c;
    cases.push_back({c, {}});  // C1
    c.method = Method::robust_fm_2;
    cases.push_back({c, {}});  // C1 + C2
    c.method = Method::ff_opt;
    c.psd = Desk::psd_at(10e3);
    c.grid = PredictOptions{NAN, 1e6, 8, 24};
    cases.push_back({c, {}});  // C1 + FF
    c.representative_only = true;
    cases.push_back({c, {}});
    c.representative_only = false;
    c.method = Method::batch_ff;
    std::vector<double> off;
    for (int k = 0; k < d.modes.mode_count(); ++k) off.push_back(hz_to_rad(400.0 * nd(rng)));
    cases.push_back({c, off});  // batch terms
    OptimizerConfig cap;
    cap.rabi_max = 0.9 * evaluate_cost(p, d.modes, d.pair, cap).rabi;
    cases.push_back({cap, {}});  // C1 + penalty
    for (const auto& [cfg, o] : cases) {
      std::vector<double> g;
      evaluate_cost(p, d.modes, d.pair, cfg, o, &g);
      double scale = 0.0;
      for (double v : g) scale = std::max(scale, std::abs(v));
      const double h = kTwoPi * 1.0;
      for (std::size_t l = 0; l < g.size(); l += 3) {
        auto eval = [&](double x) {
          FMPulse q = p;
          q.mu[l] += x;
          return evaluate_cost(q, d.modes, d.pair, cfg, o).total();
        };
        const double fd = (eval(-2 * h) - 8 * eval(-h) + 8 * eval(h) - eval(2 * h)) / (12 * h);
        worst = std::max(worst, std::abs(g[l] - fd) / std::max(std::abs(fd), 1e-3 * scale));
        ++checked;
      }
    }
  }
  return {worst < 1e-5, "worst relative deviation " + sci(worst, 2) + " over " + std::to_string(checked) +
                            " components (6 cost configurations x 10 pulses)"};
}

Outcome c7_robust_convergence(Desk& d) {
  const auto t0 = std::chrono::steady_clock::now();
  const OptimizationResult r = optimize(OptimizerConfig{}, d.modes, d.pair);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double ea = displacement_error(r.pulse, d.modes, d.pair);
  const double dth = std::abs(rotation_angle(r.pulse, d.modes, d.pair) - kTargetAngle);
  d.robust1 = r.pulse;
  std::ostringstream os;
  os << "sum|alpha|^2 " << sci(ea, 2) << ", |Theta - pi/4| " << sci(dth, 2) << ", " << r.iterations
     << " iterations, " << std::setprecision(3) << secs << " s";
  return {ea < 1e-9 && dth < 1e-9 && r.iterations < 300 && secs < 60.0, os.str()};
}

double order_norm(const StaticErrorPoint& p, int m) { return p.alpha_orders.at(m).norm(); }

Outcome c8_order_structure(Desk& d) {
  const std::vector<double> delta = {-kTwoPi * 500.0};
  SweepOptions opt;
  const auto a = static_error_sweep(d.robust_fm_1(), d.modes, d.pair, delta, opt)[0];
  const auto b = static_error_sweep(d.robust_fm_2(), d.modes, d.pair, delta, opt)[0];
  const double r1 = order_norm(a, 2) / order_norm(a, 1);
  const double r2 = order_norm(b, 3) / order_norm(b, 2);
  std::ostringstream os;
  os << "robust_fm_1 |a2|/|a1| = " << sci(r1) << ", robust_fm_2 |a3|/|a2| = " << sci(r2);
  return {r1 >= 100.0 && r2 >= 100.0, os.str()};
}

Outcome c9_ff_advantage(Desk& d) {
  const auto t0 = std::chrono::steady_clock::now();
  SimulationConfig sc;
  sc.gate_counts = {1};
  sc.realizations = 200;
  sc.seed = 9;
  bool ok = true;
  std::ostringstream os;
  for (double fc : {5e3, 10e3, 20e3}) {
    const NoisePSD psd = Desk::psd_at(fc);
    const FMPulse& rp = d.robust_fm_1();
    const FMPulse& fp = d.ff_opt(fc);
    const double pr = predict_error(rp, d.modes, d.pair, psd, NoiseChannel::mode_frequency).e_total();
    const double pf = predict_error(fp, d.modes, d.pair, psd, NoiseChannel::mode_frequency).e_total();
    const double mr = monte_carlo_error(rp, d.modes, d.pair, psd, NoiseChannel::mode_frequency, sc).mean_eps[0];
    const double mf = monte_carlo_error(fp, d.modes, d.pair, psd, NoiseChannel::mode_frequency, sc).mean_eps[0];
    ok = ok && pr >= 5.0 * pf && mr >= 5.0 * mf;
    os << "fc " << fc / 1e3 << " kHz: pred x" << std::setprecision(3) << pr / pf << " MC x" << mr / mf << "; ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  os << "200 realizations, " << std::lround(secs) << " s";
  return {ok && secs < 1800.0, os.str()};
}

Outcome c10_monotone(Desk& d) {
  const FMPulse& p = d.robust_fm_1();
  const double amp = 2.0 * std::sqrt(2.0) * kPi * 500.0;
  SimulationConfig sc;
  sc.gate_counts = {1};
  sc.realizations = 400;
  sc.seed = 10;
  bool ok = true;
  std::ostringstream os;
  for (double f : {2e3, 5e3, 10e3, 17e3}) {
    const NoisePSD psd = monotone_psd(amp, f);
    const double pr = predict_error(p, d.modes, d.pair, psd, NoiseChannel::mode_frequency).e_total();
    const double mc = monte_carlo_error(p, d.modes, d.pair, psd, NoiseChannel::mode_frequency, sc).mean_eps[0];
    const double dev = std::abs(pr / mc - 1.0);
    ok = ok && dev <= 0.25;
    os << f / 1e3 << " kHz " << std::setprecision(2) << 100.0 * dev << "%; ";
  }
  const NoisePSD low = monotone_psd(amp, 500.0);
  const ErrorPrediction e = predict_error(p, d.modes, d.pair, low, NoiseChannel::mode_frequency);
  const MonteCarloReport mc = monte_carlo_error(p, d.modes, d.pair, low, NoiseChannel::mode_frequency, sc);
  ok = ok && e.e_theta > e.e_alpha && mc.mean_e_theta > mc.mean_e_alpha;
  os << "500 Hz: E_Theta/E_alpha pred " << sci(e.e_theta / e.e_alpha) << ", MC " << sci(mc.mean_e_theta / mc.mean_e_alpha);
  return {ok, os.str()};
}

Outcome c11_low_fc(Desk& d) {
  const NoisePSD psd = Desk::psd_at(500.0);
  const FMPulse& rp = d.robust_fm_1();
  SimulationConfig sc;
  sc.gate_counts = {1};
  sc.realizations = 3000;
  sc.seed = 11;
  const double mc = monte_carlo_error(rp, d.modes, d.pair, psd, NoiseChannel::mode_frequency, sc).mean_eps[0];
  const double eq9 = predict_error(rp, d.modes, d.pair, psd, NoiseChannel::mode_frequency).e_total();
  const double stat = static_average_prediction(rp, d.modes, d.pair, psd);
  const bool a = std::abs(stat - mc) < std::abs(eq9 - mc);

  const FMPulse& ff = d.ff_opt(500.0);
  OptimizerConfig bc;
  bc.method = Method::batch_ff;
  bc.psd = psd;
  const FMPulse batch = optimize_batch(bc, d.modes, d.pair, ff).pulse;
  double mf = 0.0, mb = 0.0;
  for (std::uint64_t seed : {3, 11}) {
    SimulationConfig s2;
    s2.gate_counts = {1};
    s2.realizations = 1000;
    s2.seed = seed;
    mf += monte_carlo_error(ff, d.modes, d.pair, psd, NoiseChannel::mode_frequency, s2).mean_eps[0] / 2.0;
    mb += monte_carlo_error(batch, d.modes, d.pair, psd, NoiseChannel::mode_frequency, s2).mean_eps[0] / 2.0;
  }
  std::ostringstream os;
  os << "robust_fm_1 MC " << sci(mc) << ", static average " << sci(stat) << ", linear " << sci(eq9)
     << "; MC ff_opt " << sci(mf) << " vs batch_ff " << sci(mb) << " (seeds 3, 11)";
  return {a && mb <= mf, os.str()};
}

Outcome c12_phase_noise(Desk& d) {
  const FMPulse& p = d.robust_fm_1();
  PsdSpec s;
  s.center = 10e3;
  // Weak enough that the second-order E_Theta from E_alpha^2 stays below the
  // Monte-Carlo standard error.
  s.peak_std = 0.002;
  s.flicker_std = 0.0004;
  const NoisePSD psd = build_psd(s);
  SimulationConfig sc;
  sc.gate_counts = {1};
  sc.realizations = 1000;
  sc.seed = 12;
  const MonteCarloReport mc = monte_carlo_error(p, d.modes, d.pair, psd, NoiseChannel::laser_phase, sc);
  const double pred = predict_error(p, d.modes, d.pair, psd, NoiseChannel::laser_phase).e_theta;
  const double z = std::abs(mc.mean_e_theta - pred) / mc.stderr_e_theta;
  std::ostringstream os;
  os << "MC E_Theta " << sci(mc.mean_e_theta) << " +- " << sci(mc.stderr_e_theta, 2) << ", integral " << sci(pred)
     << " (" << std::setprecision(2) << z << " standard errors, 1000 realizations)";
  return {z <= 2.0, os.str()};
}

Outcome c13_synthesis(Desk&) {
  auto ensemble = [](const NoisePSD& psd, double duration, int seeds) {
    double ss = 0.0;
    std::size_t n = 0;
    for (int s = 0; s < seeds; ++s) {
      const auto tr = realize_trace(psd, duration, 0.5 / psd.upper_edge(), 5000 + s);
      for (double v : tr.values) ss += v * v;
      n += tr.values.size();
    }
    return std::sqrt(ss / n);
  };
  PsdSpec g;
  g.flicker_std = 0.0;
  PsdSpec f;
  f.peak_std = 0.0;
  const double sg = ensemble(build_psd(g), 2e-3, 2000) / (kTwoPi * 500.0) - 1.0;
  const double sf = ensemble(build_psd(f), 4e-6, 4000) / (kTwoPi * 100.0) - 1.0;
  std::ostringstream os;
  os << "Gaussian std off by " << std::setprecision(2) << 100.0 * sg << "%, 1/f std off by " << 100.0 * sf << "%";
  return {std::abs(sg) < 0.03 && std::abs(sf) < 0.03, os.str()};
}

Outcome c14_spectroscopy(Desk&) {
  const NoisePSD psd = build_psd(PsdSpec{});
  std::vector<ContrastMeasurement> ms;
  for (double fp : {5e3, 6e3, 7e3, 8e3, 9e3, 9.5e3, 10e3, 10.5e3, 11e3, 12e3, 13e3, 15e3}) {
    const CPMGSequence seq{21, 0.5 / fp, {}};
    ms.push_back({21, seq.interval, forward_contrast(psd, seq).contrast, 0.0});
  }
  InversionOptions opt;
  opt.joint_fit = true;
  const InversionResult r = invert_psd(ms, opt);
  double worst = 0.0;
  for (std::size_t i = 0; i < r.points.size(); ++i)
    worst = std::max(worst, std::abs(r.fit_density[i] / psd.density(r.points[i].frequency) - 1.0));
  // DC blindness: |ỹ| falls linearly towards f = 0.
  double dc = 0.0;
  for (int l : {1, 5, 21}) {
    const CPMGSequence seq{l, 50e-6, {}};
    dc = std::max({dc, std::abs(cpmg_filter(seq, 0.0)), std::abs(cpmg_filter(seq, 1e-3)) / seq.total()});
  }
  std::ostringstream os;
  os << "worst S error " << std::setprecision(3) << 100.0 * worst << "% at 12 peaks; max |y(f->0)|/(L tau) " << sci(dc, 2);
  return {worst < 0.2 && dc < 1e-6, os.str()};
}

Outcome c15_modes(Desk& d) {
  auto axial = [](int n) {
    TrapConfig c;
    c.ion_count = n;
    c.branch = ModeBranch::axial;
    return normal_modes(c);
  };
  const auto m2 = axial(2), m3 = axial(3);
  const double e2 = std::abs(m2.frequencies(1) / m2.frequencies(0) - std::sqrt(3.0));
  const double e3 = std::abs(m3.frequencies(2) / m3.frequencies(0) - std::sqrt(29.0 / 5.0));
  const auto& m = d.modes;
  const bool top = m.com_index == m.mode_count() - 1;
  const auto com = m.eigenvectors.row(m.com_index);
  const double spread = (com.array() - 1.0 / std::sqrt(m.ion_count())).abs().maxCoeff();
  std::ostringstream os;
  os << "sqrt(3) dev " << sci(e2, 2) << ", sqrt(29/5) dev " << sci(e3, 2) << ", COM highest " << (top ? "yes" : "no")
     << ", COM eigenvector dev " << sci(spread, 2);
  return {e2 < 1e-9 && e3 < 1e-9 && top && spread < 1e-10, os.str()};
}

double heating_slope(const FMPulse& p, const Desk& d, double scale, const LindbladConfig& cfg) {
  DissipationRates r = default_rates(d.modes);
  r.laser_coherence = INFINITY;
  for (double& g : r.heating) g *= scale;
  const auto res = evolve_lindblad(p, d.modes, d.pair, r, cfg);
  std::vector<SequencePoint> pts;
  for (std::size_t i = 0; i < res.rho.size(); ++i) pts.push_back(sequence_point(res.rho[i], res.gate_counts[i]));
  return extract_gate_error(pts).slope;
}

Outcome c16_budget(Desk& d) {
  const NoisePSD psd = Desk::psd_at(10e3);
  BudgetOptions opt;
  opt.rates = default_rates(d.modes);
  const bool paper_rates =
      opt.rates.heating[d.modes.com_index] == 614.0 && opt.rates.laser_coherence == 0.496 &&
      std::count(opt.rates.heating.begin(), opt.rates.heating.end(), 5.0) == d.modes.mode_count() - 1;
  std::vector<BudgetEntry> rows = {error_budget("robust_fm_1", d.robust_fm_1(), d.modes, d.pair, psd, opt),
                                   error_budget("ff_opt", d.ff_opt(10e3), d.modes, d.pair, psd, opt)};
  const std::string table = budget_table(rows);
  std::printf("%s", table.c_str());
  const bool format = table.find("dephasing(%)") != std::string::npos && table.find("heating(%)") != std::string::npos &&
                      table.find("laser(%)") != std::string::npos;
  // Linearity: the heating column at doubled rates, both measured against the same ideal slope.
  const double base = heating_slope(d.robust_fm_1(), d, 0.0, opt.lindblad);
  const double h1 = rows[0].heating;
  const double h2 = heating_slope(d.robust_fm_1(), d, 2.0, opt.lindblad) - base;
  const double lin = std::abs(h2 / (2.0 * h1) - 1.0);
  std::ostringstream os;
  os << "heating per gate " << sci(h1) << " at x1, " << sci(h2) << " at x2 (nonlinearity " << std::setprecision(2)
     << 100.0 * lin << "%); table produced";
  return {paper_rates && format && h1 > 0.0 && lin < 0.05, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome(Desk&)>>> criteria = {
      {"closed forms vs dense quadrature", c1_closed_form},
      {"first-order displacement derivative identity", c2_derivative_identity},
      {"F_Theta low-frequency limit", c3_low_frequency_limit},
      {"F_alpha equals static displacement error", c4_static_identity},
      {"intensity filter identities and Rabi offset", c5_intensity_identities},
      {"cost gradient audit", c6_gradient_audit},
      {"robust_fm_1 convergence", c7_robust_convergence},
      {"static-offset order structure", c8_order_structure},
      {"filter-function optimization advantage", c9_ff_advantage},
      {"single-tone prediction accuracy", c10_monotone},
      {"low-f_c regime", c11_low_fc},
      {"weak phase noise equivalence", c12_phase_noise},
      {"noise synthesis variance", c13_synthesis},
      {"spectroscopy round trip", c14_spectroscopy},
      {"mode solver ratios", c15_modes},
      {"Lindblad error budget", c16_budget},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  Desk desk;
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second(desk);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("criterion %2d %s: %s (%s) [%.1f s]\n", n, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
