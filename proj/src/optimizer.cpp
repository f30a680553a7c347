#include "msff/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

namespace msff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

LinearPhase negated(const LinearPhase& p) {
  LinearPhase q = p;
  for (auto& v : q.start) v = -v;
  for (auto& v : q.slope) v = -v;
  return q;
}

// Θ at Ω = 1 (including the spin sign) and optionally its μ-gradient.
double unit_angle(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                  const std::vector<double>& offsets, std::vector<double>* grad) {
  const std::size_t s = pulse.segment_count();
  std::vector<cplx> g(grad ? s : 0), tmp(grad ? s : 0);
  double th = 0.0;
  for (int k = 0; k < modes.mode_count(); ++k) {
    const double ee = modes.lamb_dicke(k, pair.first) * modes.lamb_dicke(k, pair.second);
    if (ee == 0.0) continue;
    const double w = modes.frequencies(k) + (offsets.empty() ? 0.0 : offsets[k]);
    const LinearPhase pos = mode_phase(pulse, w);
    const LinearPhase neg = negated(pos);
    cplx d;
    if (grad) {
      std::fill(tmp.begin(), tmp.end(), cplx(0.0, 0.0));
      d = ordered_integral(pos, 0, neg, 0, 1.0, -1.0, tmp);
      for (std::size_t l = 0; l < s; ++l) g[l] += -0.5 * ee * tmp[l];
    } else {
      d = ordered_integral(pos, 0, neg, 0);
    }
    th += -0.5 * ee * d.imag();
  }
  const double sign = pulse.spin_phase_sign;
  if (grad) {
    grad->assign(s, 0.0);
    for (std::size_t l = 0; l < s; ++l) (*grad)[l] = sign * g[l].imag();
  }
  return sign * th;
}

// Σ_k c_k |I_n-combination|² with gradient, for the displacement-type terms.
// kind 0: |I0 - I1/τ|² (averaged), 1: |I2|² / τ⁴, 2: |I0|² (at offsets).
double displacement_term(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                         int kind, const std::vector<double>& offsets, std::vector<double>* grad) {
  const std::size_t s = pulse.segment_count();
  const double tau = pulse.duration;
  std::vector<cplx> ga(grad ? s : 0), gb(grad ? s : 0);
  if (grad) grad->assign(s, 0.0);
  double total = 0.0;
  for (int k = 0; k < modes.mode_count(); ++k) {
    const double e1 = modes.lamb_dicke(k, pair.first), e2 = modes.lamb_dicke(k, pair.second);
    const double c = 0.25 * (e1 * e1 + e2 * e2);
    if (c == 0.0) continue;
    const double w = modes.frequencies(k) + (offsets.empty() ? 0.0 : offsets[k]);
    LinearPhase neg = negated(mode_phase(pulse, w));
    cplx v;
    if (grad) {
      std::fill(ga.begin(), ga.end(), cplx(0.0, 0.0));
      std::fill(gb.begin(), gb.end(), cplx(0.0, 0.0));
    }
    auto integral = [&](int n, std::vector<cplx>& g) {
      return grad ? single_integral(neg, n, -1.0, g) : single_integral(neg, n);
    };
    double scale = 1.0;
    if (kind == 0) {
      const cplx i0 = integral(0, ga), i1 = integral(1, gb);
      v = i0 - i1 / tau;
      if (grad)
        for (std::size_t l = 0; l < s; ++l) ga[l] -= gb[l] / tau;
    } else if (kind == 1) {
      v = integral(2, ga);
      scale = 1.0 / (tau * tau * tau * tau);
    } else {
      v = integral(0, ga);
    }
    total += scale * c * std::norm(v);
    if (grad)
      for (std::size_t l = 0; l < s; ++l) (*grad)[l] += 2.0 * scale * c * (std::conj(v) * ga[l]).real();
  }
  return total;
}

struct FFUnit {
  double alpha = 0.0, theta = 0.0;
  std::vector<double> galpha, gtheta;
};

FFUnit ff_unit(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
               const FFWeights& w, bool want_grad) {
  FFUnit out;
  const std::size_t s = pulse.segment_count();
  if (want_grad) {
    out.galpha.assign(s, 0.0);
    out.gtheta.assign(s, 0.0);
  }
  FilterKernel kern(pulse, modes, pair);
  std::vector<double> g(want_grad ? s : 0);
  auto accumulate = [&](std::vector<double>& dst, double weight) {
    for (std::size_t l = 0; l < s; ++l) dst[l] += weight * g[l];
  };
  for (std::size_t i = 0; i < w.frequency.size(); ++i) {
    const double f = w.frequency[i], wt = 0.5 * w.weight[i];
    for (double sf : {f, -f}) {
      if (want_grad) std::fill(g.begin(), g.end(), 0.0);
      out.alpha += wt * kern.f_alpha_unit(sf, false, g);
      if (want_grad) accumulate(out.galpha, wt);
      if (f == 0.0) break;
    }
  }
  for (std::size_t i = 0; i < w.theta_frequency.size(); ++i) {
    if (want_grad) std::fill(g.begin(), g.end(), 0.0);
    out.theta += w.theta_weight[i] * kern.f_theta_unit(w.theta_frequency[i], false, g);
    if (want_grad) accumulate(out.gtheta, w.theta_weight[i]);
  }
  return out;
}

bool uses_ff(Method m) { return m == Method::ff_opt || m == Method::batch_ff; }

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::robust_fm_1:
      return "robust_fm_1";
    case Method::robust_fm_2:
      return "robust_fm_2";
    case Method::ff_opt:
      return "ff_opt";
    case Method::batch_ff:
      return "batch_ff";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::robust_fm_1, Method::robust_fm_2, Method::ff_opt, Method::batch_ff})
    if (name == method_name(m)) return m;
  throw ConfigError("unknown optimization method '" + name + "'");
}

void OptimizerConfig::validate() const {
  if (segments < 1) throw ConfigError("segments must be positive");
  if (!(duration > 0.0)) throw ConfigError("duration must be positive");
  if (rabi_max < 0.0) throw ConfigError("rabi_max must be non-negative");
  if (rabi_max > 0.0 && !(beta > 0.0 && gamma > 0.0))
    throw ConfigError("penalty needs beta > 0 and gamma > 0");
  if (uses_ff(method) && !psd) throw ConfigError("method requires a noise PSD");
  if (method == Method::batch_ff && !(batch_std >= 0.0)) throw ConfigError("batch_std must be >= 0");
  if (max_iterations < 0 || batch_iterations < 1) throw ConfigError("max_iterations must be >= 0 and batch_iterations > 0");
  if (starts < 1) throw ConfigError("starts must be positive");
  if (!(bound_margin > 0.0)) throw ConfigError("bound_margin must be positive");
}

int OptimizerConfig::iteration_cap() const {
  if (max_iterations > 0) return max_iterations;
  return uses_ff(method) ? 300 : 2000;
}

FFWeights ff_weights(const OptimizerConfig& cfg) {
  FFWeights w;
  if (!cfg.psd) return w;
  NoisePSD surrogate;
  if (cfg.method == Method::batch_ff && cfg.batch_line_surrogate &&
      cfg.psd->kind == PsdKind::gaussian_plus_oneoverf) {
    surrogate.kind = PsdKind::monotone_line;
    surrogate.lines.push_back({cfg.psd->center, 0.5 * cfg.psd->peak_variance()});
  }
  const NoisePSD& psd = surrogate.kind == PsdKind::monotone_line ? surrogate : *cfg.psd;
  const auto grid = prediction_grid(psd, cfg.grid);
  const std::size_t n = grid.size();
  for (std::size_t i = 0; i < n; ++i) {
    double du = 0.0;
    if (i > 0) du += 0.5 * std::log(grid[i] / grid[i - 1]);
    if (i + 1 < n) du += 0.5 * std::log(grid[i + 1] / grid[i]);
    const double f = grid[i];
    const double v = 2.0 * du * f * psd.density(f) / ((kTwoPi * f) * (kTwoPi * f));
    if (v > 0.0) {
      w.frequency.push_back(f);
      w.weight.push_back(v);
    }
  }
  if (cfg.representative_only) {
    const double fr = 0.5 / cfg.duration;
    const double v = 2.0 * fr * psd.density(fr) / ((kTwoPi * fr) * (kTwoPi * fr));
    if (v > 0.0) {
      w.theta_frequency.push_back(fr);
      w.theta_weight.push_back(v);
    }
  } else {
    w.theta_frequency = w.frequency;
    w.theta_weight = w.weight;
  }
  for (const auto& l : psd.lines) {
    if (l.weight <= 0.0) continue;
    const double v = 2.0 * l.weight / ((kTwoPi * l.frequency) * (kTwoPi * l.frequency));
    w.frequency.push_back(l.frequency);
    w.weight.push_back(v);
    w.theta_frequency.push_back(l.frequency);
    w.theta_weight.push_back(v);
  }
  return w;
}

CostBreakdown evaluate_cost(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                            const OptimizerConfig& cfg, const std::vector<double>& offsets,
                            std::vector<double>* grad, const FFWeights* weights) {
  pair.validate(modes);
  if (!offsets.empty() && offsets.size() != static_cast<std::size_t>(modes.mode_count()))
    throw ConfigError("offset vector length must equal the mode count");
  if (uses_ff(cfg.method) && !cfg.psd) throw ConfigError("method requires a noise PSD");
  const std::size_t s = pulse.segment_count();
  const bool g = grad != nullptr;
  std::vector<double> dth;
  const double th1 = unit_angle(pulse, modes, pair, {}, g ? &dth : nullptr);
  if (!(th1 > 0.0))
    throw NumericalError("rotation angle has the wrong sign for the configured spin phase");
  const double o2 = kTargetAngle / th1;
  std::vector<double> do2(s, 0.0);
  if (g)
    for (std::size_t l = 0; l < s; ++l) do2[l] = -o2 * dth[l] / th1;

  CostBreakdown c;
  c.rabi = std::sqrt(o2);
  if (g) grad->assign(s, 0.0);
  // Ω² A(μ) terms.
  auto add_quadratic = [&](double a, const std::vector<double>& da, double& slot) {
    slot = o2 * a;
    if (g)
      for (std::size_t l = 0; l < s; ++l) (*grad)[l] += o2 * da[l] + a * do2[l];
  };
  std::vector<double> da;
  const bool batch = cfg.method == Method::batch_ff;
  if (!batch) {
    const double a = displacement_term(pulse, modes, pair, 0, {}, g ? &da : nullptr);
    add_quadratic(a, da, c.c1);
  }
  if (cfg.method == Method::robust_fm_2) {
    const double a = displacement_term(pulse, modes, pair, 1, {}, g ? &da : nullptr);
    add_quadratic(a, da, c.c2);
  }
  if (uses_ff(cfg.method)) {
    FFWeights local;
    if (!weights) {
      local = ff_weights(cfg);
      weights = &local;
    }
    const ModeStructure* m = &modes;
    ModeStructure shifted;
    if (batch && !offsets.empty()) {
      shifted = modes.shifted(Eigen::Map<const Eigen::VectorXd>(offsets.data(), offsets.size()));
      m = &shifted;
    }
    const FFUnit ff = ff_unit(pulse, *m, pair, *weights, g);
    add_quadratic(ff.alpha, ff.galpha, c.ff_alpha);
    c.ff_theta = o2 * o2 * ff.theta;
    if (g)
      for (std::size_t l = 0; l < s; ++l)
        (*grad)[l] += o2 * o2 * ff.gtheta[l] + 2.0 * o2 * ff.theta * do2[l];
  }
  if (batch) {
    const double a = displacement_term(pulse, modes, pair, 2, offsets, g ? &da : nullptr);
    add_quadratic(a, da, c.batch_alpha);
    std::vector<double> dthd;
    const double thd = offsets.empty() ? th1 : unit_angle(pulse, modes, pair, offsets, g ? &dthd : nullptr);
    if (offsets.empty()) dthd = dth;
    const double r = o2 * thd - kTargetAngle;
    c.batch_theta = 0.5 * r * r;
    if (g)
      for (std::size_t l = 0; l < s; ++l) (*grad)[l] += r * (o2 * dthd[l] + thd * do2[l]);
  }
  if (cfg.rabi_max > 0.0) {
    const double q = cfg.rabi_max * cfg.rabi_max / o2;
    c.penalty = cfg.beta * std::exp(cfg.gamma * (1.0 - q));
    if (g)
      for (std::size_t l = 0; l < s; ++l) (*grad)[l] += c.penalty * cfg.gamma * q / o2 * do2[l];
  }
  return c;
}

std::vector<double> gradient(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                             const OptimizerConfig& cfg) {
  std::vector<double> full;
  evaluate_cost(pulse, modes, pair, cfg, {}, &full);
  const std::size_t s = full.size(), p = free_count(s);
  std::vector<double> out(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    out[i] = full[i];
    if (s - 1 - i != i) out[i] += full[s - 1 - i];
  }
  return out;
}

FMPulse rescale_omega(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair) {
  pair.validate(modes);
  const double th = rotation_angle(pulse, modes, pair);
  if (!(th > 0.0))
    throw NumericalError("cannot rescale: rotation angle is not positive (set spin_phase_sign)");
  FMPulse out = pulse;
  out.rabi = pulse.rabi * std::sqrt(kTargetAngle / th);
  return out;
}

int natural_spin_sign(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair) {
  FMPulse p = pulse;
  p.spin_phase_sign = 1;
  return unit_angle(p, modes, pair, {}, nullptr) < 0.0 ? -1 : 1;
}

FMPulse initial_guess(const OptimizerConfig& cfg, const ModeStructure& modes) {
  const double mu0 = modes.frequencies.minCoeff() + cfg.initial_detuning;
  std::vector<double> free(free_count(static_cast<std::size_t>(cfg.segments)), mu0);
  if (cfg.odd != (cfg.segments % 2 == 1))
    throw ConfigError("segment count parity does not match the odd flag");
  return build_symmetric_pulse(free, cfg.duration, 1.0, cfg.odd);
}


namespace {

using Clock = std::chrono::steady_clock;

// μ = mid + half tanh(z), applied to the free parameters.
struct Bounds {
  double mid = 0.0, half = 1.0;
  double to_mu(double z) const { return mid + half * std::tanh(z); }
  double dmu(double z) const {
    const double t = std::tanh(z);
    return half * (1.0 - t * t);
  }
  double to_z(double mu) const {
    const double r = std::clamp((mu - mid) / half, -1.0 + 1e-12, 1.0 - 1e-12);
    return std::atanh(r);
  }
};

Bounds make_bounds(const OptimizerConfig& cfg, const ModeStructure& modes) {
  const double lo = modes.frequencies.minCoeff() - cfg.bound_margin;
  const double hi = modes.frequencies.maxCoeff() + cfg.bound_margin;
  return {0.5 * (lo + hi), 0.5 * (hi - lo)};
}

std::vector<double> fold(const std::vector<double>& full) {
  const std::size_t s = full.size(), p = free_count(s);
  std::vector<double> out(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    out[i] = full[i];
    if (s - 1 - i != i) out[i] += full[s - 1 - i];
  }
  return out;
}

// Objective in the unconstrained variables z.
class Objective {
 public:
  Objective(const OptimizerConfig& cfg, const ModeStructure& modes, const IonPair& pair,
            const FMPulse& shape, const FFWeights& w)
      : cfg_(cfg), modes_(modes), pair_(pair), shape_(shape), w_(w), b_(make_bounds(cfg, modes)) {}

  FMPulse pulse(const std::vector<double>& z) const {
    std::vector<double> free(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) free[i] = b_.to_mu(z[i]);
    FMPulse p = build_symmetric_pulse(free, shape_.duration, 1.0, shape_.segment_count() % 2 == 1);
    p.spin_phase_sign = shape_.spin_phase_sign;
    return p;
  }

  std::vector<double> start(const FMPulse& p) const {
    const auto free = free_values(p);
    std::vector<double> z(free.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = b_.to_z(free[i]);
    return z;
  }

  // Returns +inf where the rotation angle has the wrong sign.
  double operator()(const std::vector<double>& z, std::vector<double>* g,
                    const std::vector<double>& offsets = {}, CostBreakdown* parts = nullptr) const {
    const FMPulse p = pulse(z);
    std::vector<double> full;
    CostBreakdown c;
    try {
      c = evaluate_cost(p, modes_, pair_, cfg_, offsets, g ? &full : nullptr, &w_);
    } catch (const NumericalError&) {
      if (g) g->assign(z.size(), 0.0);
      return kInf;
    }
    if (parts) *parts = c;
    const double v = c.total();
    if (!std::isfinite(v)) return kInf;
    if (g) {
      *g = fold(full);
      for (std::size_t i = 0; i < z.size(); ++i) (*g)[i] *= b_.dmu(z[i]);
    }
    return v;
  }

 private:
  const OptimizerConfig& cfg_;
  const ModeStructure& modes_;
  const IonPair& pair_;
  FMPulse shape_;
  const FFWeights& w_;
  Bounds b_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

struct LinePoint {
  double a, f, d;
  std::vector<double> g;
};

// Strong-Wolfe line search along p (Nocedal & Wright, algorithms 3.5/3.6).
bool wolfe_search(const Objective& obj, const std::vector<double>& x, double f0, double d0,
                  const std::vector<double>& p, double a1, LinePoint& out) {
  const double c1 = 1e-4, c2 = 0.9;
  std::vector<double> xt(x.size());
  auto eval = [&](double a) {
    LinePoint lp{a, 0.0, 0.0, {}};
    for (std::size_t i = 0; i < x.size(); ++i) xt[i] = x[i] + a * p[i];
    lp.f = obj(xt, &lp.g);
    lp.d = std::isfinite(lp.f) ? dot(lp.g, p) : kInf;
    return lp;
  };
  auto zoom = [&](LinePoint lo, LinePoint hi) {
    for (int it = 0; it < 30; ++it) {
      double a = 0.5 * (lo.a + hi.a);
      // Cubic interpolation when both ends carry finite data.
      if (std::isfinite(hi.f) && std::isfinite(hi.d)) {
        const double d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (lo.a - hi.a);
        const double disc = d1 * d1 - lo.d * hi.d;
        if (disc >= 0.0) {
          const double d2 = std::copysign(std::sqrt(disc), hi.a - lo.a);
          const double ac = hi.a - (hi.a - lo.a) * (hi.d + d2 - d1) / (hi.d - lo.d + 2.0 * d2);
          const double lo_a = std::min(lo.a, hi.a), hi_a = std::max(lo.a, hi.a);
          const double margin = 0.1 * (hi_a - lo_a);
          if (std::isfinite(ac) && ac > lo_a + margin && ac < hi_a - margin) a = ac;
        }
      }
      LinePoint t = eval(a);
      if (!std::isfinite(t.f) || t.f > f0 + c1 * a * d0 || t.f >= lo.f) {
        hi = t;
      } else {
        if (std::abs(t.d) <= -c2 * d0) {
          out = t;
          return true;
        }
        if (t.d * (hi.a - lo.a) >= 0.0) hi = lo;
        lo = t;
      }
      if (std::abs(hi.a - lo.a) < 1e-14 * std::max(1.0, lo.a)) break;
    }
    // Accept any sufficient decrease found.
    if (lo.a > 0.0 && lo.f < f0) {
      out = lo;
      return true;
    }
    return false;
  };
  LinePoint prev{0.0, f0, d0, {}};
  double a = a1;
  for (int it = 0; it < 40; ++it) {
    LinePoint cur = eval(a);
    if (!std::isfinite(cur.f) || cur.f > f0 + c1 * a * d0 || (it > 0 && cur.f >= prev.f))
      return zoom(prev, cur);
    if (std::abs(cur.d) <= -c2 * d0) {
      out = cur;
      return true;
    }
    if (cur.d >= 0.0) return zoom(cur, prev);
    prev = cur;
    a *= 2.0;
  }
  out = prev;
  return prev.a > 0.0;
}

struct BfgsOutcome {
  std::vector<double> x;
  double f = kInf;
  int iterations = 0;
  double gnorm = 0.0;
  bool converged = false;
  bool line_search_failed = false;
  std::vector<double> costs, rabis;
  std::string message;
};

BfgsOutcome bfgs(const Objective& obj, std::vector<double> x, const OptimizerConfig& cfg) {
  BfgsOutcome r;
  const std::size_t n = x.size();
  const auto t0 = Clock::now();
  std::vector<double> g;
  CostBreakdown parts;
  double f = obj(x, &g, {}, &parts);
  if (!std::isfinite(f)) {
    r.x = x;
    r.message = "initial guess gives a rotation angle of the wrong sign";
    return r;
  }
  r.costs.push_back(f);
  r.rabis.push_back(parts.rabi);
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  int it = 0;
  for (; it < cfg.iteration_cap(); ++it) {
    r.gnorm = inf_norm(g);
    if (r.gnorm <= cfg.gradient_tolerance) {
      r.converged = true;
      r.message = "gradient tolerance reached";
      break;
    }
    if (cfg.time_limit > 0.0 &&
        std::chrono::duration<double>(Clock::now() - t0).count() > cfg.time_limit) {
      r.message = "time limit reached";
      break;
    }
    Eigen::Map<const Eigen::VectorXd> gv(g.data(), n);
    Eigen::VectorXd pv = -(h * gv);
    double d0 = pv.dot(gv);
    if (!(d0 < 0.0)) {
      h.setIdentity();
      pv = -gv;
      d0 = pv.dot(gv);
    }
    std::vector<double> p(pv.data(), pv.data() + n);
    // The first step is capped at a change of about 0.01 in z.
    const double a1 = scaled ? 1.0 : std::min(1.0, 1e-2 / std::max(inf_norm(p), 1e-300));
    LinePoint lp;
    if (!wolfe_search(obj, x, f, d0, p, a1, lp)) {
      if (scaled) {
        // Retry once along steepest descent with a fresh metric.
        h.setIdentity();
        scaled = false;
        continue;
      }
      r.line_search_failed = true;
      r.message = "line search failed to reduce the cost";
      break;
    }
    Eigen::VectorXd sv(n), yv(n);
    for (std::size_t i = 0; i < n; ++i) {
      sv[i] = lp.a * p[i];
      yv[i] = lp.g[i] - g[i];
      x[i] += sv[i];
    }
    const double fprev = f;
    f = lp.f;
    g = lp.g;
    const double sy = sv.dot(yv);
    if (sy > 1e-12 * sv.norm() * yv.norm()) {
      if (!scaled) {
        h *= sy / yv.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h * yv;
      h += (rho * rho * yv.dot(hy) + rho) * (sv * sv.transpose()) -
           rho * (hy * sv.transpose() + sv * hy.transpose());
    }
    obj(x, nullptr, {}, &parts);
    r.costs.push_back(f);
    r.rabis.push_back(parts.rabi);
    if (fprev - f <= 1e-15 * std::abs(fprev) && f < fprev) {
      // Progress has stalled at rounding level.
      r.converged = true;
      r.message = "cost change below rounding level";
      ++it;
      r.gnorm = inf_norm(g);
      break;
    }
  }
  if (r.message.empty()) {
    r.message = "iteration cap reached";
    r.gnorm = inf_norm(g);
  }
  r.iterations = it;
  r.x = x;
  r.f = f;
  return r;
}

FMPulse starting_pulse(const OptimizerConfig& cfg, const ModeStructure& modes, const IonPair& pair,
                       const std::optional<FMPulse>& initial) {
  FMPulse p = initial ? *initial : initial_guess(cfg, modes);
  p.validate();
  if (!p.symmetric) throw ConfigError("the optimizer needs a symmetric pulse");
  if (initial && (p.segment_count() != static_cast<std::size_t>(cfg.segments) || p.duration != cfg.duration))
    throw ConfigError("initial pulse does not match the configured segments and duration");
  p.rabi = 1.0;
  p.spin_phase_sign = natural_spin_sign(p, modes, pair);
  return p;
}

FMPulse finish(const FMPulse& p, const ModeStructure& modes, const IonPair& pair) {
  FMPulse q = p;
  q.rabi = 1.0;
  return rescale_omega(q, modes, pair);
}

}  // namespace

OptimizationResult optimize(const OptimizerConfig& cfg, const ModeStructure& modes, const IonPair& pair,
                            std::optional<FMPulse> initial) {
  cfg.validate();
  pair.validate(modes);
  if (cfg.method == Method::batch_ff) return optimize_batch(cfg, modes, pair, initial);
  const FMPulse base = starting_pulse(cfg, modes, pair, initial);
  const FFWeights w = ff_weights(cfg);
  Objective obj(cfg, modes, pair, base, w);
  std::mt19937_64 rng = stream_rng(cfg.seed, 0);
  std::normal_distribution<double> nd(0.0, 1.0);
  const auto free0 = free_values(base);

  OptimizationResult best;
  double best_f = kInf;
  const double lowest = modes.frequencies.minCoeff();
  for (int st = 0; st < cfg.starts; ++st) {
    auto free = free0;
    if (st > 0) {
      // Later starts double the detuning below the lowest mode and add a random tilt.
      const double shift = cfg.initial_detuning * std::ldexp(1.0, st) - cfg.initial_detuning;
      for (auto& v : free) v = std::max(v + shift + cfg.start_spread * nd(rng), lowest - cfg.bound_margin);
    }
    FMPulse p0 = build_symmetric_pulse(free, base.duration, 1.0, base.segment_count() % 2 == 1);
    p0.spin_phase_sign = base.spin_phase_sign;
    BfgsOutcome o = bfgs(obj, obj.start(p0), cfg);
    // Costs at rounding level count as ties; the earliest start wins.
    if (st > 0 && !(o.f < best_f && best_f > 1e-14)) continue;
    best_f = o.f;
    best.pulse = obj.pulse(o.x);
    best.iterations = o.iterations;
    best.gradient_norm = o.gnorm;
    best.converged = o.converged;
    best.line_search_failed = o.line_search_failed;
    best.start_index = st;
    best.cost_history = std::move(o.costs);
    best.rabi_history = std::move(o.rabis);
    best.message = o.message;
  }
  if (!std::isfinite(best_f))
    throw ConvergenceError("no start produced a usable pulse: " + best.message, kInf);
  best.pulse = finish(best.pulse, modes, pair);
  FMPulse unit = best.pulse;
  unit.rabi = 1.0;
  best.cost = evaluate_cost(unit, modes, pair, cfg, {}, nullptr, &w);
  return best;
}

namespace {

std::vector<std::vector<double>> draw_batch(const OptimizerConfig& cfg, const ModeStructure& modes,
                                            std::mt19937_64& rng, int count) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<double>> out(count, std::vector<double>(modes.mode_count()));
  for (auto& d : out) {
    const double common = cfg.batch_std * nd(rng);
    for (int k = 0; k < modes.mode_count(); ++k)
      d[k] = common * (cfg.batch_rule == OffsetRule::scaled ? modes.scaling(k) : 1.0);
  }
  return out;
}

}  // namespace

OptimizationResult optimize_batch(const OptimizerConfig& cfg, const ModeStructure& modes,
                                  const IonPair& pair, std::optional<FMPulse> initial) {
  cfg.validate();
  pair.validate(modes);
  if (cfg.method != Method::batch_ff) throw ConfigError("optimize_batch needs method batch_ff");
  FMPulse start;
  if (initial) {
    start = starting_pulse(cfg, modes, pair, initial);
  } else {
    // Warm start from the filter-function optimum.
    OptimizerConfig warm = cfg;
    warm.method = Method::ff_opt;
    start = optimize(warm, modes, pair).pulse;
    start.rabi = 1.0;
  }
  const FFWeights w = ff_weights(cfg);
  Objective obj(cfg, modes, pair, start, w);
  std::mt19937_64 train_rng = stream_rng(cfg.seed, 1);
  std::mt19937_64 valid_rng = stream_rng(cfg.seed, 2);
  const auto validation = draw_batch(cfg, modes, valid_rng, 8);
  auto validate_cost = [&](const std::vector<double>& z) {
    double s = 0.0;
    for (const auto& d : validation) s += obj(z, nullptr, d);
    return s / validation.size();
  };

  std::vector<double> z = obj.start(start);
  const std::size_t n = z.size();
  std::vector<double> m(n, 0.0), v(n, 0.0), g;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-12;
  // Learning rate is relative to a 10 kHz step in μ.
  const Bounds b = make_bounds(cfg, modes);
  const double step = cfg.learning_rate * kTwoPi * 10e3 / b.half;

  OptimizationResult res;
  std::vector<double> best_z = z;
  double best_v = validate_cost(z);
  res.cost_history.push_back(best_v);
  {
    CostBreakdown parts;
    obj(z, nullptr, {}, &parts);
    res.rabi_history.push_back(parts.rabi);
  }
  const auto t0 = Clock::now();
  int it = 0;
  for (; it < cfg.batch_iterations; ++it) {
    if (cfg.time_limit > 0.0 &&
        std::chrono::duration<double>(Clock::now() - t0).count() > cfg.time_limit)
      break;
    const auto offsets = draw_batch(cfg, modes, train_rng, 1).front();
    const double f = obj(z, &g, offsets);
    if (!std::isfinite(f)) {
      // Step back toward the best iterate when the sign constraint is violated.
      z = best_z;
      std::fill(m.begin(), m.end(), 0.0);
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mh = m[i] / (1.0 - std::pow(b1, it + 1));
      const double vh = v[i] / (1.0 - std::pow(b2, it + 1));
      z[i] -= step * mh / (std::sqrt(vh) + eps * (1.0 + std::sqrt(vh)));
    }
    // Validation is the expensive part, so it runs every tenth step and at the end.
    if ((it + 1) % 10 != 0 && it + 1 != cfg.batch_iterations) continue;
    const double vc = validate_cost(z);
    res.cost_history.push_back(vc);
    CostBreakdown parts;
    obj(z, nullptr, {}, &parts);
    res.rabi_history.push_back(parts.rabi);
    if (vc < best_v) {
      best_v = vc;
      best_z = z;
    }
  }
  res.iterations = it;
  res.converged = true;
  res.message = "batch iterations complete";
  res.pulse = finish(obj.pulse(best_z), modes, pair);
  FMPulse unit = res.pulse;
  unit.rabi = 1.0;
  res.cost = evaluate_cost(unit, modes, pair, cfg, {}, nullptr, &w);
  std::vector<double> gfull;
  obj(best_z, &gfull);
  res.gradient_norm = inf_norm(gfull);
  return res;
}

}  // namespace msff
