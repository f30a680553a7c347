#include "msff/filter_functions.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "msff/io.hpp"

namespace msff {

namespace {

// φ(t) + w t, keeping the segment grid.
LinearPhase add_ramp(const LinearPhase& p, double w) {
  LinearPhase q = p;
  for (std::size_t i = 0; i < q.size(); ++i) {
    q.slope[i] += w;
    q.start[i] += w * p.width * static_cast<double>(i);
  }
  return q;
}

LinearPhase negate(const LinearPhase& p) {
  LinearPhase q = p;
  for (auto& v : q.start) v = -v;
  for (auto& v : q.slope) v = -v;
  return q;
}

// Accumulates scale * d(ordered)/dμ into acc.
cplx ordered_with_grad(const LinearPhase& outer, const LinearPhase& inner, double ko, double ki,
                       cplx scale, std::vector<cplx>& tmp, std::vector<cplx>& acc) {
  if (acc.empty()) return ordered_integral(outer, 0, inner, 0);
  std::fill(tmp.begin(), tmp.end(), cplx(0.0, 0.0));
  const cplx v = ordered_integral(outer, 0, inner, 0, ko, ki, tmp);
  for (std::size_t l = 0; l < acc.size(); ++l) acc[l] += scale * tmp[l];
  return v;
}

}  // namespace

FilterKernel::FilterKernel(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair)
    : pulse_(pulse), modes_(modes), pair_(pair) {
  pair.validate(modes);
  pulse.validate();
  for (int k = 0; k < modes.mode_count(); ++k) {
    pos_.push_back(mode_phase(pulse, modes.frequencies(k)));
    neg_.push_back(negate(pos_.back()));
  }
}

double FilterKernel::f_alpha_unit(double f_hz, bool unit_scaling, std::span<double> grad) const {
  const double w = kTwoPi * f_hz;
  const std::size_t s = pulse_.segment_count();
  std::vector<cplx> g(grad.empty() ? 0 : s);
  double value = 0.0;
  for (int k = 0; k < modes_.mode_count(); ++k) {
    const double e1 = modes_.lamb_dicke(k, pair_.first), e2 = modes_.lamb_dicke(k, pair_.second);
    const double r = unit_scaling ? 1.0 : modes_.scaling(k);
    const double c = (e1 * e1 + e2 * e2) * r * r / 4.0;
    if (c == 0.0) continue;
    const LinearPhase ph = add_ramp(neg_[k], w);
    if (grad.empty()) {
      value += c * std::norm(single_integral(ph, 0));
      continue;
    }
    std::fill(g.begin(), g.end(), cplx(0.0, 0.0));
    const cplx i0 = single_integral(ph, 0, -1.0, g);
    value += c * std::norm(i0);
    for (std::size_t l = 0; l < s; ++l) grad[l] += 2.0 * c * (std::conj(i0) * g[l]).real();
  }
  return value;
}

// D(outer, inner) + D(inner, outer) = I(outer) I(inner), so each F_Θ / G_Θ term needs
// only two ordered integrals per mode.
double FilterKernel::f_theta_unit(double f_hz, bool unit_scaling, std::span<double> grad) const {
  const double w = kTwoPi * f_hz;
  const std::size_t s = pulse_.segment_count();
  const bool g = !grad.empty();
  std::vector<cplx> dx(g ? s : 0), tmp(g ? s : 0), ga(g ? s : 0), gb(g ? s : 0), gc(g ? s : 0),
      gd(g ? s : 0);
  cplx x(0.0, 0.0);
  for (int k = 0; k < modes_.mode_count(); ++k) {
    const double r = unit_scaling ? 1.0 : modes_.scaling(k);
    const double c = 0.5 * r * modes_.lamb_dicke(k, pair_.first) * modes_.lamb_dicke(k, pair_.second);
    if (c == 0.0) continue;
    const LinearPhase up = add_ramp(pos_[k], w);  // ωt + θ
    const LinearPhase um = add_ramp(neg_[k], w);  // ωt - θ
    // ½(D1 + D2 - D3 - D4) = D1 + D2 - ½[I(ωt-θ) I(θ) + I(ωt+θ) I(-θ)]
    const cplx d1 = ordered_with_grad(up, neg_[k], 1.0, -1.0, c, tmp, dx);
    const cplx d2 = ordered_with_grad(um, pos_[k], -1.0, 1.0, c, tmp, dx);
    cplx i_um, i_pos, i_up, i_neg;
    if (g) {
      for (auto* v : {&ga, &gb, &gc, &gd}) std::fill(v->begin(), v->end(), cplx(0.0, 0.0));
      i_um = single_integral(um, 0, -1.0, ga);
      i_pos = single_integral(pos_[k], 0, 1.0, gb);
      i_up = single_integral(up, 0, 1.0, gc);
      i_neg = single_integral(neg_[k], 0, -1.0, gd);
      for (std::size_t l = 0; l < s; ++l)
        dx[l] -= 0.5 * c * (ga[l] * i_pos + i_um * gb[l] + gc[l] * i_neg + i_up * gd[l]);
    } else {
      i_um = single_integral(um, 0);
      i_pos = single_integral(pos_[k], 0);
      i_up = single_integral(up, 0);
      i_neg = single_integral(neg_[k], 0);
    }
    x += c * (d1 + d2 - 0.5 * (i_um * i_pos + i_up * i_neg));
  }
  for (std::size_t l = 0; l < dx.size(); ++l) grad[l] += 2.0 * (std::conj(x) * dx[l]).real();
  return std::norm(x);
}

double FilterKernel::g_theta_unit(double f_hz) const {
  const double w = kTwoPi * f_hz;
  cplx y(0.0, 0.0);
  for (int k = 0; k < modes_.mode_count(); ++k) {
    const double c = modes_.lamb_dicke(k, pair_.first) * modes_.lamb_dicke(k, pair_.second);
    if (c == 0.0) continue;
    const LinearPhase up = add_ramp(pos_[k], w);
    const LinearPhase um = add_ramp(neg_[k], w);
    // D1 - D2 + D3 - D4 = 2(D1 - D2) + I(ωt-θ) I(θ) - I(ωt+θ) I(-θ)
    const cplx d1 = ordered_integral(up, 0, neg_[k], 0);
    const cplx d2 = ordered_integral(um, 0, pos_[k], 0);
    const cplx cross = single_integral(um, 0) * single_integral(pos_[k], 0) -
                       single_integral(up, 0) * single_integral(neg_[k], 0);
    y += c * (2.0 * (d1 - d2) + cross) / cplx(0.0, 2.0);
  }
  return 0.25 * std::norm(y);
}

double FilterKernel::f_alpha(double f_hz, bool unit_scaling) const {
  return pulse_.rabi * pulse_.rabi * f_alpha_unit(f_hz, unit_scaling);
}

double FilterKernel::f_theta(double f_hz, bool unit_scaling) const {
  const double o2 = pulse_.rabi * pulse_.rabi;
  return o2 * o2 * f_theta_unit(f_hz, unit_scaling);
}

double FilterKernel::g_theta(double f_hz) const {
  const double o2 = pulse_.rabi * pulse_.rabi;
  return o2 * o2 * g_theta_unit(f_hz);
}

double f_alpha(const FMPulse& p, const ModeStructure& m, const IonPair& pr, double f) {
  return FilterKernel(p, m, pr).f_alpha(f);
}
double f_theta(const FMPulse& p, const ModeStructure& m, const IonPair& pr, double f) {
  return FilterKernel(p, m, pr).f_theta(f);
}
double g_alpha(const FMPulse& p, const ModeStructure& m, const IonPair& pr, double f) {
  return FilterKernel(p, m, pr).g_alpha(f);
}
double g_theta(const FMPulse& p, const ModeStructure& m, const IonPair& pr, double f) {
  return FilterKernel(p, m, pr).g_theta(f);
}

FilterFunctionTable filter_table(const FMPulse& pulse, const ModeStructure& modes,
                                 const IonPair& pair, const std::vector<double>& freqs) {
  FilterKernel k(pulse, modes, pair);
  FilterFunctionTable t;
  t.frequency = freqs;
  for (double f : freqs) {
    t.f_alpha.push_back(k.f_alpha(f));
    t.f_theta.push_back(k.f_theta(f));
    t.g_alpha.push_back(k.g_alpha(f));
    t.g_theta.push_back(k.g_theta(f));
  }
  std::ostringstream key;
  key << io::pulse_to_json(pulse).dump() << io::modes_to_json(modes).dump() << pair.first << ','
      << pair.second;
  t.fingerprint = io::hex64(io::fnv1a(key.str()));
  return t;
}

std::string filter_table_csv(const FilterFunctionTable& t) {
  std::ostringstream os;
  os << std::setprecision(12) << "f_hz,F_alpha,F_theta,G_alpha,G_theta\n";
  for (std::size_t i = 0; i < t.frequency.size(); ++i)
    os << t.frequency[i] << ',' << t.f_alpha[i] << ',' << t.f_theta[i] << ',' << t.g_alpha[i] << ','
       << t.g_theta[i] << '\n';
  return os.str();
}

std::pair<double, double> prediction_band(const NoisePSD& psd, const PredictOptions& opt) {
  double lo = opt.f_min;
  if (std::isnan(lo)) lo = psd.has_flicker() ? psd.f_min : 1.0;
  if (!(lo > 0.0))
    throw ConfigError("the error integral diverges at f = 0 for this PSD; set an explicit f_min > 0");
  lo = std::max(lo, psd.lower_edge());
  const double hi = std::min(opt.f_max, psd.upper_edge());
  return {lo, hi};
}

std::vector<double> prediction_grid(const NoisePSD& psd, const PredictOptions& opt) {
  if (!psd.has_continuum()) return {};
  const auto [lo, hi] = prediction_band(psd, opt);
  if (!(hi > lo)) return {};
  return frequency_grid(psd, lo, hi, opt.per_decade, opt.peak_points);
}

ErrorPrediction predict_error(const FMPulse& pulse, const ModeStructure& modes, const IonPair& pair,
                              const NoisePSD& psd, NoiseChannel channel, const PredictOptions& opt) {
  FilterKernel kern(pulse, modes, pair);
  const bool unit = channel != NoiseChannel::mode_frequency;
  auto weight = [&](double f) {
    switch (channel) {
      case NoiseChannel::mode_frequency:
        return 1.0 / ((kTwoPi * f) * (kTwoPi * f));
      case NoiseChannel::laser_phase:
        return 1.0;
      case NoiseChannel::laser_intensity:
        return 1.0 / (pulse.rabi * pulse.rabi);
    }
    return 0.0;
  };
  // F_α is not even in f; both signs enter the two-sided integral.
  auto fa = [&](double f) { return 0.5 * (kern.f_alpha(f, unit) + kern.f_alpha(-f, unit)); };
  auto ft = [&](double f) {
    return channel == NoiseChannel::laser_intensity ? kern.g_theta(f) : kern.f_theta(f, unit);
  };
  if (channel == NoiseChannel::laser_intensity && pulse.rabi == 0.0)
    throw NumericalError("intensity-noise prediction needs a nonzero Rabi frequency");

  ErrorPrediction out;
  const auto grid = prediction_grid(psd, opt);
  if (!grid.empty()) {
    std::vector<double> ya(grid.size()), yt(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double s = psd.density(grid[i]) * weight(grid[i]);
      ya[i] = s == 0.0 ? 0.0 : s * fa(grid[i]);
      yt[i] = s == 0.0 ? 0.0 : s * ft(grid[i]);
    }
    out.e_alpha = 2.0 * log_trapezoid(grid, ya);
    out.e_theta = 2.0 * log_trapezoid(grid, yt);
    out.f_lo = grid.front();
    out.f_hi = grid.back();
    out.grid_points = grid.size();
  }
  for (const auto& l : psd.lines) {
    if (l.weight == 0.0) continue;
    const double w = 2.0 * l.weight * weight(l.frequency);
    out.e_alpha += w * fa(l.frequency);
    out.e_theta += w * ft(l.frequency);
  }
  return out;
}

}  // namespace msff
