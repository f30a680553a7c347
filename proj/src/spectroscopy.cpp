#include "msff/spectroscopy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include <Eigen/Dense>

namespace msff {

namespace {

// 8-point Gauss-Legendre on [0, 1].
const std::array<std::pair<double, double>, 8>& gauss8() {
  static const auto rule = [] {
    constexpr int n = 8;
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    std::array<std::pair<double, double>, n> out;
    for (int k = 0; k < n; ++k) {
      const double v = es.eigenvectors()(0, k);
      out[k] = {0.5 * (es.eigenvalues()(k) + 1.0), v * v};
    }
    return out;
  }();
  return rule;
}

// (e^{ix} - 1)/x, finite at x = 0.
cplx expm1_over(double x) {
  if (std::abs(x) < 1e-4) return {-0.5 * x * (1.0 - x * x / 12.0), 1.0 - x * x / 6.0};
  const double s = std::sin(0.5 * x);
  return {-2.0 * s * s / x, std::sin(x) / x};
}

// Averaged |ỹ|² once the oscillation is much faster than the PSD varies.
double mean_kernel(const CPMGSequence& seq, double f) {
  const double w = kTwoPi * f;
  return (2.0 + 4.0 * seq.pulses) / (w * w);
}

std::vector<double> breakpoints(const NoisePSD& psd, const CPMGSequence& seq, double lo, double hi) {
  std::vector<double> b{lo, hi};
  const double step = 1.0 / (8.0 * seq.total());
  for (double f = std::ceil(lo / step) * step; f < hi; f += step) b.push_back(f);
  const double decades = std::log10(hi / lo);
  const int nlog = static_cast<int>(std::ceil(32.0 * decades));
  for (int i = 1; i < nlog; ++i) b.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / nlog));
  if (psd.kind == PsdKind::gaussian_plus_oneoverf && psd.n1 > 0.0) {
    const double s = psd.width;
    for (double f = psd.center - 10.0 * s; f <= psd.center + 10.0 * s; f += 0.25 * s)
      if (f > lo && f < hi) b.push_back(f);
  }
  if (psd.kind == PsdKind::tabulated)
    for (double f : psd.table.frequency)
      if (f > lo && f < hi) b.push_back(f);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

double panel_sum(const std::vector<double>& b, int refine, const std::function<double(double)>& g) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) {
    const double h = (b[i + 1] - b[i]) / refine;
    for (int r = 0; r < refine; ++r) {
      const double a = b[i] + r * h;
      for (const auto& [x, w] : gauss8()) acc += h * w * g(a + h * x);
    }
  }
  return acc;
}

}  // namespace

std::vector<double> CPMGSequence::times() const {
  std::vector<double> t{0.0};
  if (stamps.empty()) {
    for (int i = 1; i <= pulses; ++i) t.push_back((i - 0.5) * interval);
  } else {
    t.insert(t.end(), stamps.begin(), stamps.end());
  }
  t.push_back(total());
  return t;
}

void CPMGSequence::validate() const {
  if (pulses < 1) throw ConfigError("CPMG sequence needs at least one π pulse");
  if (!(interval > 0.0) || !std::isfinite(interval)) throw ConfigError("CPMG interval must be positive");
  if (!stamps.empty()) {
    if (stamps.size() != static_cast<std::size_t>(pulses))
      throw ConfigError("CPMG stamps must list one time per π pulse");
    const auto t = times();
    for (std::size_t i = 1; i < t.size(); ++i)
      if (!(t[i] > t[i - 1])) throw ConfigError("CPMG pulse times must increase strictly inside (0, Lτ̃)");
  }
}

cplx cpmg_filter(const CPMGSequence& seq, double f) {
  const auto t = seq.times();
  const double w = kTwoPi * f;
  // Each term is -Δ_j e^{iωτ̃_j} (e^{iωΔ_j} - 1)/(ωΔ_j), regular at ω = 0.
  cplx acc(0.0, 0.0);
  for (std::size_t j = 0; j + 1 < t.size(); ++j) {
    const double d = t[j + 1] - t[j];
    const cplx term = -d * std::polar(1.0, w * t[j]) * expm1_over(w * d);
    acc += (j % 2 == 0) ? term : -term;
  }
  return acc;
}

ContrastPrediction forward_contrast(const NoisePSD& psd, const CPMGSequence& seq, int refine) {
  seq.validate();
  if (refine < 1) throw ConfigError("refine must be positive");
  double chi = 0.0;
  for (const auto& l : psd.lines) chi += 4.0 * l.weight * cpmg_kernel(seq, l.frequency);
  if (psd.has_continuum()) {
    const double lo = psd.lower_edge(), hi = psd.upper_edge();
    if (!(lo > 0.0) || !(hi > lo)) throw NumericalError("PSD band is not integrable against the CPMG kernel");
    // Resolve the kernel exactly well past the passband, then use its running mean.
    double cut = 64.0 / seq.interval;
    if (psd.kind == PsdKind::gaussian_plus_oneoverf && psd.n1 > 0.0)
      cut = std::max(cut, psd.center + 10.0 * psd.width);
    cut = std::min(cut, hi);
    chi += 4.0 * panel_sum(breakpoints(psd, seq, lo, cut), refine,
                           [&](double f) { return psd.density(f) * cpmg_kernel(seq, f); });
    if (hi > cut) {
      std::vector<double> b;
      const int n = std::max(2, static_cast<int>(std::ceil(32.0 * std::log10(hi / cut))));
      for (int i = 0; i <= n; ++i) b.push_back(cut * std::pow(hi / cut, static_cast<double>(i) / n));
      chi += 4.0 * panel_sum(b, refine, [&](double f) { return psd.density(f) * mean_kernel(seq, f); });
    }
  }
  if (!std::isfinite(chi)) throw NumericalError("divergent contrast integral");
  return {chi, std::exp(-chi)};
}

std::vector<ContrastMeasurement> read_measurements(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<ContrastMeasurement> out;
  int lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (first) {
      first = false;
      if (line.find("tau") != std::string::npos || line.find('L') == 0) continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    ContrastMeasurement m;
    double pulses = 0.0;
    if (!(ls >> pulses >> m.interval >> m.contrast)) throw ConfigError("bad measurement row at line " + std::to_string(lineno));
    if (!(ls >> m.contrast_std)) m.contrast_std = 0.0;
    if (pulses < 1.0 || pulses != std::floor(pulses) || !(m.interval > 0.0) || m.contrast_std < 0.0)
      throw ConfigError("invalid measurement at line " + std::to_string(lineno));
    m.pulses = static_cast<int>(pulses);
    out.push_back(m);
  }
  return out;
}

// Full double precision so re-reading reproduces the same inversion.
std::string measurements_csv(const std::vector<ContrastMeasurement>& m) {
  std::ostringstream os;
  os << std::setprecision(17) << "L,tau_tilde_s,contrast,contrast_std\n";
  for (const auto& x : m) os << x.pulses << ',' << x.interval << ',' << x.contrast << ',' << x.contrast_std << '\n';
  return os.str();
}

namespace {

// log-log interpolation of a band; values at zero are interpolated linearly.
double band_value(const std::vector<PsdEstimate>& band, double f) {
  auto it = std::lower_bound(band.begin(), band.end(), f,
                             [](const PsdEstimate& p, double x) { return p.frequency < x; });
  if (it == band.begin()) return it->density;
  if (it == band.end()) return band.back().density;
  const auto& a = *(it - 1);
  const auto& b = *it;
  if (b.frequency == a.frequency) return 0.5 * (a.density + b.density);
  const double u = std::log(f / a.frequency) / std::log(b.frequency / a.frequency);
  if (a.density > 0.0 && b.density > 0.0) return a.density * std::pow(b.density / a.density, u);
  return a.density + u * (b.density - a.density);
}

struct Fit {
  std::vector<double> density;
  double residual = 0.0;
};

// Piecewise-linear S on nodes; 1/f continuation below the first node and 1/f²
// above the last, each over a factor of eight.
double hat(const std::vector<double>& x, int m, double f) {
  const int n = static_cast<int>(x.size());
  if (m == 0 && f < x[0]) return f >= x[0] / 8.0 ? x[0] / f : 0.0;
  if (m == n - 1 && f > x[n - 1]) return f <= 8.0 * x[n - 1] ? (x[n - 1] / f) * (x[n - 1] / f) : 0.0;
  if (m > 0 && f >= x[m - 1] && f <= x[m]) return (f - x[m - 1]) / (x[m] - x[m - 1]);
  if (m + 1 < n && f >= x[m] && f <= x[m + 1]) return (x[m + 1] - f) / (x[m + 1] - x[m]);
  return 0.0;
}

// Lawson-Hanson non-negative least squares.
Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const int n = static_cast<int>(a.cols());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(n, false);
  const double tol = 1e-12 * a.norm() * b.norm();
  for (int outer = 0; outer < 3 * n; ++outer) {
    const Eigen::VectorXd w = a.transpose() * (b - a * x);
    int j = -1;
    double best = tol;
    for (int i = 0; i < n; ++i)
      if (!passive[i] && w(i) > best) {
        best = w(i);
        j = i;
      }
    if (j < 0) break;
    passive[j] = true;
    for (int inner = 0; inner < 3 * n; ++inner) {
      std::vector<int> idx;
      for (int i = 0; i < n; ++i)
        if (passive[i]) idx.push_back(i);
      Eigen::MatrixXd ap(a.rows(), idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) ap.col(k) = a.col(idx[k]);
      const Eigen::VectorXd z = ap.colPivHouseholderQr().solve(b);
      bool feasible = true;
      for (double v : z)
        if (v <= 0.0) feasible = false;
      if (feasible) {
        x.setZero();
        for (std::size_t k = 0; k < idx.size(); ++k) x(idx[k]) = z(k);
        break;
      }
      double alpha = 1.0;
      for (std::size_t k = 0; k < idx.size(); ++k)
        if (z(k) <= 0.0) alpha = std::min(alpha, x(idx[k]) / (x(idx[k]) - z(k)));
      for (std::size_t k = 0; k < idx.size(); ++k) x(idx[k]) += alpha * (z(k) - x(idx[k]));
      for (int i : idx)
        if (x(i) <= 1e-300) {
          passive[i] = false;
          x(i) = 0.0;
        }
    }
  }
  return x;
}

Fit joint_fit(const std::vector<ContrastMeasurement>& ms, const std::vector<double>& chi,
              const std::vector<double>& chi_std, const std::vector<PsdEstimate>& pts,
              const InversionOptions& opt) {
  std::vector<double> x;
  for (const auto& p : pts) x.push_back(p.frequency);
  x.erase(std::unique(x.begin(), x.end()), x.end());
  if (opt.fit_nodes > 0) {
    const double f1 = x.front(), fm = x.back();
    x.clear();
    for (int i = 0; i < opt.fit_nodes; ++i)
      x.push_back(f1 * std::pow(fm / f1, opt.fit_nodes > 1 ? static_cast<double>(i) / (opt.fit_nodes - 1) : 0.0));
  }
  const int nodes = static_cast<int>(x.size()), nm = static_cast<int>(ms.size());
  if (nodes < 2) throw ConfigError("the joint fit needs at least two distinct filter peaks");

  // K_im = 4 ∫ φ_m |ỹ_i|² df.
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(nm, nodes);
  for (int i = 0; i < nm; ++i) {
    const CPMGSequence seq{ms[i].pulses, ms[i].interval, {}};
    std::vector<double> b(x.begin(), x.end());
    const double lo = x.front() / 8.0, hi = 8.0 * x.back(), step = 1.0 / (8.0 * seq.total());
    for (double f = lo; f < hi; f += step) b.push_back(f);
    b.push_back(hi);
    std::sort(b.begin(), b.end());
    for (std::size_t p = 0; p + 1 < b.size(); ++p) {
      const double h = b[p + 1] - b[p];
      for (const auto& [u, w] : gauss8()) {
        const double f = b[p] + h * u;
        const double kern = 4.0 * h * w * cpmg_kernel(seq, f);
        for (int m = 0; m < nodes; ++m) k(i, m) += kern * hat(x, m, f);
      }
    }
  }
  double chi_max = 0.0;
  for (double c : chi) chi_max = std::max(chi_max, c);
  Eigen::VectorXd inv(nm);
  for (int i = 0; i < nm; ++i) inv(i) = 1.0 / std::max({chi_std[i], 1e-3 * chi[i], 1e-9 * chi_max, 1e-300});
  const Eigen::MatrixXd a = inv.asDiagonal() * k;
  const Eigen::VectorXd y = inv.cwiseProduct(Eigen::Map<const Eigen::VectorXd>(chi.data(), nm));
  // Second-difference rows, scaled to the data columns.
  const int nr = std::max(0, nodes - 2);
  const double reg = std::sqrt(opt.smoothing * a.colwise().squaredNorm().mean());
  Eigen::MatrixXd aa = Eigen::MatrixXd::Zero(nm + nr, nodes);
  Eigen::VectorXd yy = Eigen::VectorXd::Zero(nm + nr);
  aa.topRows(nm) = a;
  yy.head(nm) = y;
  for (int r = 0; r < nr; ++r) {
    aa(nm + r, r) = reg;
    aa(nm + r, r + 1) = -2.0 * reg;
    aa(nm + r, r + 2) = reg;
  }
  const Eigen::VectorXd s0 = nnls(aa, yy);

  // Refine with log S piecewise linear in log f on a fixed quadrature grid.
  std::vector<double> fq, wq;
  {
    double t_max = 0.0;
    for (const auto& m : ms) t_max = std::max(t_max, m.pulses * m.interval);
    std::vector<double> b(x.begin(), x.end());
    const double lo = x.front() / 8.0, hi = 8.0 * x.back(), step = 1.0 / (8.0 * t_max);
    for (double f = lo; f < hi; f += step) b.push_back(f);
    b.push_back(hi);
    std::sort(b.begin(), b.end());
    for (std::size_t p = 0; p + 1 < b.size(); ++p) {
      const double h = b[p + 1] - b[p];
      for (const auto& [u, w] : gauss8()) {
        fq.push_back(b[p] + h * u);
        wq.push_back(h * w);
      }
    }
  }
  const int nq = static_cast<int>(fq.size());
  Eigen::MatrixXd wk(nm, nq);
  for (int i = 0; i < nm; ++i) {
    const CPMGSequence seq{ms[i].pulses, ms[i].interval, {}};
    for (int q = 0; q < nq; ++q) wk(i, q) = 4.0 * wq[q] * cpmg_kernel(seq, fq[q]) * inv(i);
  }
  // log S(f) = Σ_m φ_m(f) u_m + c(f): log-linear hats, fixed slopes -1 / -2 past the ends.
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(nq, nodes);
  Eigen::VectorXd offset = Eigen::VectorXd::Zero(nq);
  for (int q = 0; q < nq; ++q) {
    const double f = fq[q];
    if (f <= x.front()) {
      phi(q, 0) = 1.0;
      offset(q) = -std::log(f / x.front());
    } else if (f >= x.back()) {
      phi(q, nodes - 1) = 1.0;
      offset(q) = -2.0 * std::log(f / x.back());
    } else {
      const int m = static_cast<int>(std::upper_bound(x.begin(), x.end(), f) - x.begin()) - 1;
      const double u = std::log(f / x[m]) / std::log(x[m + 1] / x[m]);
      phi(q, m) = 1.0 - u;
      phi(q, m + 1) = u;
    }
  }
  const double smax = s0.maxCoeff();
  Fit fit;
  if (!(smax > 0.0)) {
    fit.density.assign(pts.size(), 0.0);
    fit.residual = std::sqrt(y.squaredNorm() / nm);
    return fit;
  }
  Eigen::VectorXd u(nodes);
  for (int m = 0; m < nodes; ++m) u(m) = std::log(std::max(s0(m), 1e-4 * smax));
  const double lreg = std::sqrt(opt.smoothing);
  auto eval = [&](const Eigen::VectorXd& v, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    const Eigen::VectorXd sq = (phi * v + offset).array().exp().matrix();
    r.resize(nm + nr);
    r.head(nm) = wk * sq - y;
    for (int i = 0; i < nr; ++i) r(nm + i) = lreg * (v(i) - 2.0 * v(i + 1) + v(i + 2));
    if (jac) {
      jac->setZero(nm + nr, nodes);
      jac->topRows(nm) = wk * (sq.asDiagonal() * phi);
      for (int i = 0; i < nr; ++i) {
        (*jac)(nm + i, i) = lreg;
        (*jac)(nm + i, i + 1) = -2.0 * lreg;
        (*jac)(nm + i, i + 2) = lreg;
      }
    }
  };
  Eigen::VectorXd r, rt;
  Eigen::MatrixXd jac;
  eval(u, r, &jac);
  double cost = r.squaredNorm(), lambda = 1e-3;
  for (int it = 0; it < 500; ++it) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 30 && !improved; ++tries) {
      Eigen::MatrixXd m = jtj;
      m.diagonal() += lambda * (jtj.diagonal().array() + 1e-12 * jtj.diagonal().maxCoeff()).matrix();
      const Eigen::VectorXd trial = u - m.ldlt().solve(g);
      eval(trial, rt, nullptr);
      const double c = rt.squaredNorm();
      if (std::isfinite(c) && c < cost) {
        const bool done = cost - c < 1e-10 * cost;
        u = trial;
        cost = c;
        lambda = std::max(lambda / 5.0, 1e-15);
        improved = true;
        eval(u, r, &jac);
        if (done) it = 500;
      } else {
        lambda *= 5.0;
      }
    }
    if (!improved) break;
  }
  for (const auto& p : pts) {
    const int m = std::clamp(static_cast<int>(std::upper_bound(x.begin(), x.end(), p.frequency) - x.begin()) - 1, 0,
                             nodes - 2);
    const double a = std::clamp(std::log(p.frequency / x[m]) / std::log(x[m + 1] / x[m]), 0.0, 1.0);
    fit.density.push_back(std::exp((1.0 - a) * u(m) + a * u(m + 1)));
  }
  fit.residual = std::sqrt(r.head(nm).squaredNorm() / nm);
  return fit;
}

}  // namespace

InversionResult invert_psd(const std::vector<ContrastMeasurement>& ms, const InversionOptions& opt) {
  InversionResult res;
  std::vector<ContrastMeasurement> used;
  std::vector<double> chi, chi_std;
  for (const auto& m : ms) {
    CPMGSequence seq{m.pulses, m.interval, {}};
    seq.validate();
    if (!(m.contrast > 0.0) || m.contrast > 1.0) {
      std::ostringstream os;
      os << "skipped L=" << m.pulses << " tau=" << m.interval << ": contrast " << m.contrast << " outside (0, 1]";
      res.warnings.push_back(os.str());
      continue;
    }
    used.push_back(m);
    chi.push_back(-std::log(m.contrast));
    chi_std.push_back(m.contrast_std / m.contrast);
    PsdEstimate p;
    p.frequency = seq.peak_frequency();
    p.density = chi.back() / (4.0 * kernel_area(seq));
    p.density_std = chi_std.back() / (4.0 * kernel_area(seq));
    p.pulses = m.pulses;
    p.interval = m.interval;
    res.points.push_back(p);
  }
  if (res.points.size() < 3) throw ConfigError("PSD inversion needs at least three usable measurements");

  // Where bands of different pulse counts overlap, average with the other band.
  std::map<int, std::vector<PsdEstimate>> bands;
  for (const auto& p : res.points) bands[p.pulses].push_back(p);
  for (auto& [l, b] : bands)
    std::sort(b.begin(), b.end(), [](const auto& a, const auto& c) { return a.frequency < c.frequency; });
  for (auto& p : res.points) {
    double sum = p.density, var = p.density_std * p.density_std;
    int n = 1;
    for (const auto& [l, b] : bands) {
      if (l == p.pulses || b.size() < 2) continue;
      if (p.frequency < b.front().frequency || p.frequency > b.back().frequency) continue;
      const double v = band_value(b, p.frequency);
      sum += v;
      // Nearest-point uncertainty of the other band.
      double sd = b.front().density_std;
      double best = INFINITY;
      for (const auto& q : b)
        if (std::abs(std::log(q.frequency / p.frequency)) < best) {
          best = std::abs(std::log(q.frequency / p.frequency));
          sd = q.density_std;
        }
      var += sd * sd;
      ++n;
    }
    if (n > 1) {
      p.density = sum / n;
      p.density_std = std::sqrt(var) / n;
      p.averaged = true;
    }
  }
  std::stable_sort(res.points.begin(), res.points.end(),
                   [](const auto& a, const auto& b) { return a.frequency < b.frequency; });

  PsdSpec spec;
  spec.kind = PsdKind::tabulated;
  for (const auto& p : res.points) {
    if (!spec.table.frequency.empty() && spec.table.frequency.back() == p.frequency) {
      spec.table.density.back() = 0.5 * (spec.table.density.back() + p.density);
      continue;
    }
    spec.table.frequency.push_back(p.frequency);
    spec.table.density.push_back(p.density);
    spec.table.density_std.push_back(p.density_std);
  }
  res.psd = build_psd(spec);

  if (opt.joint_fit) {
    std::vector<PsdEstimate> sorted = res.points;
    const Fit fit = joint_fit(used, chi, chi_std, sorted, opt);
    res.fit_density = fit.density;
    res.fit_residual = fit.residual;
  }
  return res;
}

std::string inversion_csv(const InversionResult& r) {
  std::ostringstream os;
  os << std::setprecision(12) << "f_hz,S_over_f2,S_over_f2_std,S,S_std,L,tau_tilde_s";
  const bool fit = !r.fit_density.empty();
  if (fit) os << ",S_fit";
  os << '\n';
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    const auto& p = r.points[i];
    const double f2 = p.frequency * p.frequency;
    os << p.frequency << ',' << p.density / f2 << ',' << p.density_std / f2 << ',' << p.density << ','
       << p.density_std << ',' << p.pulses << ',' << p.interval;
    if (fit) os << ',' << r.fit_density[i];
    os << '\n';
  }
  return os.str();
}

}  // namespace msff
