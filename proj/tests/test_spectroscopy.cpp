#include "doctest.h"
#include "msff/spectroscopy.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

using namespace msff;

namespace {


// Alternating sum written out directly for explicit switching times.
double direct_kernel(const std::vector<double>& t, double f) {
  const double w = 2.0 * kPi * f;
  std::complex<double> sum = 0.0;
  for (std::size_t j = 0; j + 1 < t.size(); ++j) {
    const double sign = j % 2 == 0 ? 1.0 : -1.0;
    sum += sign * (std::exp(std::complex<double>(0.0, w * t[j])) - std::exp(std::complex<double>(0.0, w * t[j + 1])));
  }
  return std::norm(sum) / (w * w);
}

std::vector<ContrastMeasurement> synthesize(const NoisePSD& psd, int pulses, const std::vector<double>& peaks) {
  std::vector<ContrastMeasurement> ms;
  for (double fp : peaks) {
    const CPMGSequence seq{pulses, 0.5 / fp, {}};
    ms.push_back({pulses, seq.interval, forward_contrast(psd, seq).contrast, 0.0});
  }
  return ms;
}

}  // namespace

TEST_CASE("Hahn echo kernel matches the textbook form and the direct sum") {
  const double tau = 200e-6;
  const CPMGSequence seq{1, tau, {}};
  for (int i = 1; i <= 100; ++i) {
    const double f = 97.0 * i;
    const double w = 2.0 * kPi * f;
    const double textbook = 16.0 * std::pow(std::sin(w * tau / 4.0), 4) / (w * w);
    CHECK(cpmg_kernel(seq, f) == doctest::Approx(textbook).epsilon(1e-9));
    CHECK(cpmg_kernel(seq, f) == doctest::Approx(direct_kernel({0.0, tau / 2.0, tau}, f)).epsilon(1e-9));
  }
}

TEST_CASE("explicit stamps reproduce the direct sum") {
  const CPMGSequence seq{3, 100e-6, {20e-6, 150e-6, 260e-6}};
  for (double f : {300.0, 2.2e3, 7.7e3, 41e3})
    CHECK(cpmg_kernel(seq, f) == doctest::Approx(direct_kernel({0.0, 20e-6, 150e-6, 260e-6, 300e-6}, f)).epsilon(1e-9));
  CHECK_THROWS_AS((CPMGSequence{3, 100e-6, {20e-6, 10e-6, 260e-6}}.validate()), ConfigError);
  CHECK_THROWS_AS((CPMGSequence{0, 100e-6, {}}.validate()), ConfigError);
}

TEST_CASE("the filter is blind to static offsets") {
  for (int l : {1, 5, 21}) {
    const CPMGSequence seq{l, 50e-6, {}};
    CHECK(std::abs(cpmg_filter(seq, 0.0)) < 1e-15);
    double prev = INFINITY;
    for (double f : {100.0, 10.0, 1.0, 0.1}) {
      const double v = std::abs(cpmg_filter(seq, f));
      CHECK(v < prev);
      // Zero-mean switching: ỹ itself is O(f).
      CHECK(v < 1e-8 * f);
      prev = v;
    }
  }
}

TEST_CASE("L = 21 kernel peaks at 1/(2τ̃)") {
  const CPMGSequence seq{21, 80e-6, {}};
  double best = 0.0, arg = 0.0;
  for (double f = 0.1 / seq.interval; f < 2.0 / seq.interval; f += 0.5) {
    const double v = cpmg_kernel(seq, f);
    if (v > best) {
      best = v;
      arg = f;
    }
  }
  CHECK(arg == doctest::Approx(seq.peak_frequency()).epsilon(0.02));
}

TEST_CASE("kernel area obeys Parseval") {
  const CPMGSequence seq{5, 40e-6, {}};
  double sum = 0.0;
  const double df = 2.0, top = 4e6;
  for (double f = df / 2; f < top; f += df) sum += cpmg_kernel(seq, f) * df;
  // Tail beyond `top` averages (2 + 4L)/(2πf)².
  sum += (2.0 + 4.0 * seq.pulses) / (4.0 * kPi * kPi * top);
  CHECK(sum == doctest::Approx(kernel_area(seq)).epsilon(1e-4));
}

TEST_CASE("zero noise gives full contrast") {
  const CPMGSequence seq{7, 60e-6, {}};
  const auto p = forward_contrast(NoisePSD{}, seq);
  CHECK(p.chi == 0.0);
  CHECK(p.contrast == 1.0);
}

TEST_CASE("white noise: refinement and the band-limited oracle agree") {
  PsdSpec spec;
  spec.kind = PsdKind::white;
  spec.white_level = 0.02;
  spec.white_bandwidth = 200e3;
  const NoisePSD psd = build_psd(spec);
  for (int l : {1, 9}) {
    const CPMGSequence seq{l, 70e-6, {}};
    const double base = forward_contrast(psd, seq).chi;
    const double fine = forward_contrast(psd, seq, 10).chi;
    CHECK(base == doctest::Approx(fine).epsilon(0.01));
    // Full area minus the averaged kernel tail above the band edge.
    const double b = spec.white_bandwidth;
    const double oracle = 4.0 * spec.white_level * (0.5 * seq.total() - (2.0 + 4.0 * l) / (4.0 * kPi * kPi * b));
    CHECK(base == doctest::Approx(oracle).epsilon(0.01));
  }
}

TEST_CASE("a 3 kHz Gaussian produces a contrast dip where the filter crosses it") {
  PsdSpec spec;
  spec.center = 3e3;
  spec.flicker_std = 0.0;
  const NoisePSD psd = build_psd(spec);
  double lowest = 2.0, at = 0.0;
  std::vector<double> c;
  for (double fp = 1e3; fp <= 6e3; fp += 100.0) {
    const CPMGSequence seq{21, 0.5 / fp, {}};
    const double v = forward_contrast(psd, seq).contrast;
    c.push_back(v);
    if (v < lowest) {
      lowest = v;
      at = fp;
    }
  }
  CHECK(at == doctest::Approx(3e3).epsilon(0.05));
  CHECK(lowest < 0.9 * c.back());
  CHECK(lowest < 0.9 * c[c.size() / 2 + 10]);
}

TEST_CASE("noiseless round trip recovers the PSD at the filter peaks") {
  const NoisePSD psd = build_psd(PsdSpec{});
  const std::vector<double> peaks = {5e3, 6e3, 7e3, 8e3, 9e3, 9.5e3, 10e3, 10.5e3, 11e3, 12e3, 13e3, 15e3};
  InversionOptions opt;
  opt.joint_fit = true;
  const auto r = invert_psd(synthesize(psd, 21, peaks), opt);
  REQUIRE(r.points.size() == peaks.size());
  REQUIRE(r.fit_density.size() == peaks.size());
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    CAPTURE(r.points[i].frequency);
    CHECK(r.fit_density[i] == doctest::Approx(psd.density(r.points[i].frequency)).epsilon(0.2));
  }
  CHECK(r.warnings.empty());
}

TEST_CASE("round trip on a broad Gaussian over a wide band") {
  PsdSpec spec;
  spec.width = 3e3;
  const NoisePSD psd = build_psd(spec);
  const std::vector<double> peaks = {2e3, 3e3, 4e3, 5e3, 6e3, 8e3, 10e3, 12e3, 14e3, 16e3, 20e3, 30e3};
  InversionOptions opt;
  opt.joint_fit = true;
  const auto r = invert_psd(synthesize(psd, 21, peaks), opt);
  for (std::size_t i = 0; i < peaks.size(); ++i)
    CHECK(r.fit_density[i] == doctest::Approx(psd.density(r.points[i].frequency)).epsilon(0.2));
}

TEST_CASE("narrowband estimate is exact for a single line on the peak") {
  const CPMGSequence seq{15, 50e-6, {}};
  PsdSpec spec;
  spec.kind = PsdKind::monotone_line;
  spec.line_amplitude = 1e-3;
  spec.line_frequency = seq.peak_frequency();
  const NoisePSD psd = build_psd(spec);
  const double chi = forward_contrast(psd, seq).chi;
  const double weight = psd.lines.at(0).weight;
  CHECK(chi == doctest::Approx(4.0 * weight * cpmg_kernel(seq, spec.line_frequency)).epsilon(1e-9));
}

TEST_CASE("full contrast everywhere gives zero density within the uncertainty") {
  std::vector<ContrastMeasurement> ms;
  for (double fp : {2e3, 4e3, 8e3}) ms.push_back({9, 0.5 / fp, 1.0, 0.01});
  InversionOptions opt;
  opt.joint_fit = true;
  const auto r = invert_psd(ms, opt);
  REQUIRE(r.points.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(r.points[i].density) <= r.points[i].density_std);
    CHECK(r.points[i].density_std > 0.0);
    CHECK(r.fit_density[i] == 0.0);
  }
}

TEST_CASE("overlapping bands of two pulse counts are averaged") {
  const NoisePSD psd = build_psd(PsdSpec{});
  auto ms = synthesize(psd, 5, {4e3, 6e3, 8e3, 10e3});
  const auto ms21 = synthesize(psd, 21, {7e3, 12e3});
  ms.insert(ms.end(), ms21.begin(), ms21.end());
  const auto r = invert_psd(ms);
  auto own = [](const ContrastMeasurement& m) { return -std::log(m.contrast) / (2.0 * m.pulses * m.interval); };
  // 7 kHz (L = 21) sits inside the L = 5 band; 12 kHz does not.
  const auto at = [&](double f, int l) {
    return *std::find_if(r.points.begin(), r.points.end(),
                         [&](const PsdEstimate& p) { return std::abs(p.frequency - f) < 1e-6 && p.pulses == l; });
  };
  const double s6 = own(ms[1]), s8 = own(ms[2]);
  const double u = std::log(7.0 / 6.0) / std::log(8.0 / 6.0);
  const double band5 = std::exp((1.0 - u) * std::log(s6) + u * std::log(s8));
  const auto p7 = at(7e3, 21);
  CHECK(p7.averaged);
  CHECK(p7.density == doctest::Approx(0.5 * (own(ms[4]) + band5)).epsilon(1e-9));
  const auto p12 = at(12e3, 21);
  CHECK_FALSE(p12.averaged);
  CHECK(p12.density == doctest::Approx(own(ms[5])).epsilon(1e-9));
  // L = 5 points between 7 and 12 kHz pick up the L = 21 band.
  CHECK(at(8e3, 5).averaged);
  CHECK_FALSE(at(4e3, 5).averaged);
}

TEST_CASE("invalid contrasts are skipped with a warning") {
  std::vector<ContrastMeasurement> ms = {
      {5, 100e-6, 0.9, 0.0}, {5, 80e-6, 0.0, 0.0}, {5, 60e-6, 1.2, 0.0}, {5, 50e-6, 0.8, 0.0}, {5, 40e-6, 0.7, 0.0}};
  const auto r = invert_psd(ms);
  CHECK(r.warnings.size() == 2);
  CHECK(r.points.size() == 3);
  ms.pop_back();
  CHECK_THROWS_AS(invert_psd(ms), ConfigError);
}

TEST_CASE("measurement and inversion CSV round trips") {
  const std::vector<ContrastMeasurement> ms = {
      {1, 1e-4, 0.95, 0.01}, {5, 5e-5, 0.9, 0.02}, {21, 2.5e-5, 0.81, 0.005}};
  const auto back = read_measurements(measurements_csv(ms));
  REQUIRE(back.size() == ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    CHECK(back[i].pulses == ms[i].pulses);
    CHECK(back[i].interval == doctest::Approx(ms[i].interval).epsilon(1e-12));
    CHECK(back[i].contrast == doctest::Approx(ms[i].contrast).epsilon(1e-12));
    CHECK(back[i].contrast_std == doctest::Approx(ms[i].contrast_std).epsilon(1e-12));
  }
  CHECK(read_measurements("5,1e-4,0.9\n").at(0).contrast_std == 0.0);
  CHECK_THROWS_AS(read_measurements("5,abc,0.9\n"), ConfigError);

  const auto r = invert_psd(ms);
  const NoisePSD tab = read_tabulated_psd(inversion_csv(r));
  for (const auto& p : r.points) CHECK(tab.density(p.frequency) == doctest::Approx(p.density).epsilon(1e-9));
}
