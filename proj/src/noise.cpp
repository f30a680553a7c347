#include "msff/noise.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace msff {

namespace {

double gaussian(double x, double s) { return std::exp(-0.5 * x * x / (s * s)); }

double interp_loglog(const PsdTable& t, const std::vector<double>& y, double f) {
  const auto& x = t.frequency;
  if (x.empty() || f < x.front() || f > x.back()) return 0.0;
  auto it = std::upper_bound(x.begin(), x.end(), f);
  if (it == x.end()) return y.back();
  const std::size_t i = static_cast<std::size_t>(it - x.begin());
  if (i == 0) return y.front();
  const double x0 = x[i - 1], x1 = x[i], y0 = y[i - 1], y1 = y[i];
  if (y0 <= 0.0 || y1 <= 0.0) return y0 + (y1 - y0) * (f - x0) / (x1 - x0);
  const double w = std::log(f / x0) / std::log(x1 / x0);
  return std::exp((1.0 - w) * std::log(y0) + w * std::log(y1));
}

}  // namespace

double NoisePSD::density(double f) const {
  f = std::abs(f);
  switch (kind) {
    case PsdKind::zero:
    case PsdKind::monotone_line:
      return 0.0;
    case PsdKind::white:
      return f <= white_bandwidth ? white_level : 0.0;
    case PsdKind::tabulated:
      return interp_loglog(table, table.density, f);
    case PsdKind::gaussian_plus_oneoverf: {
      double s1 = 0.0;
      if (n1 > 0.0)
        s1 = n1 / (std::sqrt(kTwoPi) * width) * 0.5 *
             (gaussian(f - center, width) + gaussian(f + center, width));
      const double s2 = (n2 > 0.0 && f >= f_min && f <= f_max) ? n2 / f : 0.0;
      const double a = std::sqrt(s1) + std::sqrt(s2);
      return a * a;
    }
  }
  return 0.0;
}

double NoisePSD::lower_edge() const {
  switch (kind) {
    case PsdKind::white:
      return white_bandwidth * 1e-9;
    case PsdKind::tabulated:
      return table.frequency.empty() ? 0.0 : table.frequency.front();
    case PsdKind::gaussian_plus_oneoverf: {
      double lo = n2 > 0.0 ? f_min : INFINITY;
      if (n1 > 0.0) lo = std::min(lo, std::max(center - 8.0 * width, center * 1e-3));
      return lo;
    }
    default:
      return 0.0;
  }
}

double NoisePSD::upper_edge() const {
  double hi = 0.0;
  for (const auto& l : lines) hi = std::max(hi, l.frequency);
  switch (kind) {
    case PsdKind::white:
      return std::max(hi, white_bandwidth);
    case PsdKind::tabulated:
      return std::max(hi, table.frequency.empty() ? 0.0 : table.frequency.back());
    case PsdKind::gaussian_plus_oneoverf:
      if (n2 > 0.0) hi = std::max(hi, f_max);
      if (n1 > 0.0) hi = std::max(hi, center + 8.0 * width);
      return hi;
    default:
      return hi;
  }
}

double NoisePSD::variance() const {
  double v = 0.0;
  for (const auto& l : lines) v += 2.0 * l.weight;
  if (has_continuum()) {
    const double lo = lower_edge(), hi = upper_edge();
    if (hi > lo && lo > 0.0) {
      const auto grid = frequency_grid(*this, lo, hi, 400, 2000);
      std::vector<double> s(grid.size());
      for (std::size_t i = 0; i < grid.size(); ++i) s[i] = density(grid[i]);
      v += 2.0 * log_trapezoid(grid, s);
    }
  }
  return v;
}

NoisePSD NoisePSD::scaled(double c) const {
  NoisePSD p = *this;
  p.n1 *= c;
  p.n2 *= c;
  p.white_level *= c;
  for (auto& l : p.lines) l.weight *= c;
  for (auto& d : p.table.density) d *= c;
  for (auto& d : p.table.density_std) d *= c;
  return p;
}

NoisePSD NoisePSD::redrawn(std::mt19937_64& rng) const {
  NoisePSD p = *this;
  if (kind != PsdKind::tabulated || table.density_std.empty()) return p;
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t i = 0; i < p.table.density.size(); ++i)
    p.table.density[i] = std::max(0.0, table.density[i] + table.density_std[i] * nd(rng));
  return p;
}

NoisePSD build_psd(const PsdSpec& s) {
  NoisePSD p;
  p.kind = s.kind;
  switch (s.kind) {
    case PsdKind::zero:
      break;
    case PsdKind::gaussian_plus_oneoverf:
      if (!(s.center > 0.0)) throw ConfigError("PSD center frequency must be positive");
      if (s.peak_std < 0.0 || s.flicker_std < 0.0) throw ConfigError("PSD std must be non-negative");
      if (s.flicker_std > 0.0 && !(s.f_min > 0.0))
        throw ConfigError("a 1/f component requires an explicit f_min > 0");
      if (s.flicker_std > 0.0 && !(s.f_max > s.f_min)) throw ConfigError("PSD needs f_max > f_min");
      p.center = s.center;
      p.width = s.width > 0.0 ? s.width : s.center / 10.0;
      p.n1 = s.peak_std * s.peak_std;
      p.f_min = s.f_min;
      p.f_max = s.f_max;
      p.n2 = s.flicker_std > 0.0
                 ? s.flicker_std * s.flicker_std / (2.0 * std::log(s.f_max / s.f_min))
                 : 0.0;
      break;
    case PsdKind::monotone_line:
      if (!(s.line_frequency > 0.0)) throw ConfigError("line frequency must be positive");
      return monotone_psd(s.line_amplitude, s.line_frequency);
    case PsdKind::white:
      if (s.white_level < 0.0 || !(s.white_bandwidth > 0.0))
        throw ConfigError("white PSD needs level >= 0 and bandwidth > 0");
      p.white_level = s.white_level;
      p.white_bandwidth = s.white_bandwidth;
      break;
    case PsdKind::tabulated:
      if (s.table.frequency.size() < 2) throw ConfigError("tabulated PSD needs at least two points");
      if (s.table.density.size() != s.table.frequency.size())
        throw ConfigError("tabulated PSD columns differ in length");
      for (std::size_t i = 0; i < s.table.frequency.size(); ++i) {
        if (!(s.table.frequency[i] > 0.0)) throw ConfigError("tabulated frequencies must be positive");
        if (i > 0 && !(s.table.frequency[i] > s.table.frequency[i - 1]))
          throw ConfigError("tabulated frequencies must be ascending");
      }
      p.table = s.table;
      break;
  }
  return p;
}

NoisePSD monotone_psd(double amplitude, double frequency_hz) {
  NoisePSD p;
  p.kind = PsdKind::monotone_line;
  p.lines.push_back({frequency_hz, 0.25 * amplitude * amplitude});
  return p;
}

std::vector<double> frequency_grid(const NoisePSD& psd, double lo, double hi, int per_decade,
                                   int peak_points) {
  if (!(lo > 0.0) || !(hi > lo)) throw ConfigError("frequency grid needs 0 < lo < hi");
  std::vector<double> g;
  const int n = std::max(2, static_cast<int>(std::ceil(per_decade * std::log10(hi / lo))));
  for (int i = 0; i <= n; ++i) g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / n));
  g.back() = hi;
  if (psd.kind == PsdKind::gaussian_plus_oneoverf && psd.n1 > 0.0) {
    const double a = std::max(lo, psd.center - 5.0 * psd.width);
    const double b = std::min(hi, psd.center + 5.0 * psd.width);
    for (int i = 0; b > a && i <= peak_points; ++i) g.push_back(a + (b - a) * i / peak_points);
  }
  if (psd.kind == PsdKind::tabulated)
    for (double f : psd.table.frequency)
      if (f > lo && f < hi) g.push_back(f);
  if (psd.kind == PsdKind::white && psd.white_bandwidth > lo && psd.white_bandwidth < hi)
    g.push_back(psd.white_bandwidth);
  std::sort(g.begin(), g.end());
  std::vector<double> out;
  for (double f : g)
    if (out.empty() || f > out.back() * (1.0 + 1e-12)) out.push_back(f);
  return out;
}

double log_trapezoid(const std::vector<double>& grid, const std::vector<double>& values) {
  double acc = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    acc += 0.5 * (values[i] * grid[i] + values[i - 1] * grid[i - 1]) * std::log(grid[i] / grid[i - 1]);
  return acc;
}

std::vector<NoiseComponent> synthesis_components(const NoisePSD& psd, double lo, double hi,
                                                 int per_decade, int peak_points) {
  std::vector<NoiseComponent> out;
  if (psd.has_continuum() && hi > lo && lo > 0.0) {
    const auto edges = frequency_grid(psd, lo, hi, per_decade, peak_points);
    for (std::size_t i = 1; i < edges.size(); ++i) {
      // Simpson in ln f over the bin for ∫S and ∫fS.
      const double a = std::log(edges[i - 1]), b = std::log(edges[i]);
      double p = 0.0, m = 0.0;
      const int k = 8;
      for (int j = 0; j <= k; ++j) {
        const double w = (j == 0 || j == k) ? 1.0 : (j % 2 ? 4.0 : 2.0);
        const double f = std::exp(a + (b - a) * j / k);
        const double s = psd.density(f) * f;
        p += w * s;
        m += w * s * f;
      }
      p *= (b - a) / (3.0 * k);
      m *= (b - a) / (3.0 * k);
      if (p <= 0.0) continue;
      out.push_back({m / p, 2.0 * std::sqrt(p)});
    }
  }
  for (const auto& l : psd.lines)
    if (l.weight > 0.0) out.push_back({l.frequency, 2.0 * std::sqrt(l.weight)});
  return out;
}

NoiseRealization::NoiseRealization(const std::vector<NoiseComponent>& comps, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  for (const auto& c : comps) {
    freq_.push_back(kTwoPi * c.frequency);
    amp_.push_back(c.amplitude);
    phase_.push_back(u(rng));
  }
}

double NoiseRealization::value(double t) const {
  double v = 0.0;
  for (std::size_t i = 0; i < freq_.size(); ++i) v += amp_[i] * std::cos(freq_[i] * t + phase_[i]);
  return v;
}

double NoiseRealization::integral(double t) const {
  double v = 0.0;
  for (std::size_t i = 0; i < freq_.size(); ++i) {
    const double w = freq_[i];
    if (w == 0.0) {
      v += amp_[i] * std::cos(phase_[i]) * t;
      continue;
    }
    v += amp_[i] / w * (std::sin(w * t + phase_[i]) - std::sin(phase_[i]));
  }
  return v;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

NoiseTrace realize_trace(const NoisePSD& psd, double duration, double dt, std::uint64_t seed) {
  if (!(duration > 0.0) || !(dt > 0.0)) throw ConfigError("trace duration and dt must be positive");
  const double top = psd.upper_edge();
  if (top > 0.0 && dt > 0.5 / top * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "dt = " << dt << " s does not resolve the PSD upper edge " << top << " Hz";
    throw ConfigError(os.str());
  }
  auto rng = stream_rng(seed, 0);
  const NoisePSD p = psd.redrawn(rng);
  const auto comps = synthesis_components(p, p.lower_edge(), p.upper_edge());
  NoiseRealization r(comps, rng);
  NoiseTrace tr;
  tr.seed = seed;
  const auto n = static_cast<std::size_t>(std::ceil(duration / dt - 1e-9));
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = dt * static_cast<double>(i);
    tr.times.push_back(t);
    tr.values.push_back(r.value(t));
    tr.integral.push_back(r.integral(t));
  }
  return tr;
}

std::vector<double> sample_static_offsets(double std_dev, std::size_t count, std::uint64_t seed) {
  if (std_dev < 0.0) throw ConfigError("offset std must be non-negative");
  auto rng = stream_rng(seed, 0);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> out(count);
  for (auto& v : out) v = std_dev * nd(rng);
  return out;
}

NoisePSD read_tabulated_psd(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  struct Acc {
    double sum = 0.0, var = 0.0;
    int n = 0;
  };
  std::map<double, Acc> rows;
  bool header = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.find("f_hz") != std::string::npos) continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double f = 0.0, v = 0.0, sd = 0.0;
    if (!(ls >> f >> v)) throw ConfigError("bad PSD row at line " + std::to_string(lineno));
    if (!(ls >> sd)) sd = 0.0;
    if (!(f > 0.0) || v < 0.0 || sd < 0.0)
      throw ConfigError("invalid PSD values at line " + std::to_string(lineno));
    // Stored quantity is S/f²; convert to S.
    auto& a = rows[f];
    a.sum += v * f * f;
    a.var += (sd * f * f) * (sd * f * f);
    ++a.n;
  }
  PsdSpec spec;
  spec.kind = PsdKind::tabulated;
  for (const auto& [f, a] : rows) {
    spec.table.frequency.push_back(f);
    spec.table.density.push_back(a.sum / a.n);
    spec.table.density_std.push_back(std::sqrt(a.var) / a.n);
  }
  return build_psd(spec);
}

std::string psd_csv(const NoisePSD& psd, const std::vector<double>& grid) {
  std::ostringstream os;
  os << std::setprecision(12) << "f_hz,S,S_over_f2\n";
  for (double f : grid) {
    const double s = psd.density(f);
    os << f << ',' << s << ',' << s / (f * f) << '\n';
  }
  return os.str();
}

}  // namespace msff
