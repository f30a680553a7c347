#include "doctest.h"
#include "msff/io.hpp"
#include "msff/pulse.hpp"
#include "oracles.hpp"

#include <random>

using namespace msff;

namespace {

FMPulse random_pulse(std::mt19937_64& rng, std::size_t s, double tau) {
  std::normal_distribution<double> nd(0.0, 1.0);
  FMPulse p;
  p.duration = tau;
  p.rabi = hz_to_rad(50e3);
  for (std::size_t i = 0; i < s; ++i) p.mu.push_back(hz_to_rad(2.2e6 + 4e4 * nd(rng)));
  return p;
}

}  // namespace

TEST_CASE("symmetric construction mirrors the free values") {
  const std::vector<double> free = {1.0, 2.0};
  auto even = build_symmetric_pulse(free, 1e-4, 3.0);
  CHECK(even.mu == std::vector<double>{1.0, 2.0, 2.0, 1.0});
  auto odd = build_symmetric_pulse(free, 1e-4, 3.0, true);
  CHECK(odd.mu == std::vector<double>{1.0, 2.0, 1.0});
  CHECK(free_values(odd) == free);
  CHECK(free_values(even) == free);
  CHECK_THROWS_AS(build_symmetric_pulse(free, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(build_symmetric_pulse(std::vector<double>{}, 1.0, 1.0), ConfigError);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> f(7);
  for (auto& v : f) v = u(rng);
  for (bool o : {false, true}) {
    auto p = build_symmetric_pulse(f, 2e-4, 1.0, o);
    std::vector<double> t, tr;
    for (int i = 0; i < 1000; ++i) {
      // Avoid exact boundaries where right-continuity breaks the mirror.
      const double x = (i + 0.37) / 1000.0 * p.duration;
      t.push_back(x);
      tr.push_back(p.duration - x);
    }
    CHECK(sample_mu(p, t) == sample_mu(p, tr));
  }
}

TEST_CASE("phase trace is exact and matches quadrature") {
  FMPulse p;
  p.duration = 1e-4;
  p.mu = {5.0, 5.0, 5.0};
  auto th = mode_phase(p, 5.0);
  for (double s : th.start) CHECK(s == 0.0);

  FMPulse one;
  one.duration = 2e-4;
  one.mu = {1.0 + kTwoPi / one.duration};
  auto r = mode_phase(one, 1.0);
  CHECK(std::abs(phase_at(r, one.duration) - kTwoPi) < 1e-12);

  std::mt19937_64 rng(5);
  auto rp = random_pulse(rng, 6, 1.2e-4);
  const double w = hz_to_rad(2.25e6);
  auto ph = mode_phase(rp, w);
  // Direct summation of (μ_i - ω) over the covered part of each segment.
  const oracle::StepPhase sp{rp.mu, rp.width(), w};
  for (int i = 0; i <= 100000; i += 7) {
    const double t = rp.duration * i / 100000.0;
    const double ref = sp(t);
    CHECK(std::abs(phase_at(ph, t) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("phase trace reversal and constant shift") {
  std::mt19937_64 rng(9);
  auto f = random_pulse(rng, 5, 1e-4).mu;
  auto p = build_symmetric_pulse(f, 1e-4, 1.0);
  const double w = hz_to_rad(2.3e6);
  auto th = mode_phase(p, w);
  FMPulse rev = p;
  std::reverse(rev.mu.begin(), rev.mu.end());
  auto thr = mode_phase(rev, w);
  const double total = phase_at(th, p.duration);
  for (int i = 0; i <= 200; ++i) {
    const double t = p.duration * i / 200.0;
    CHECK(std::abs(phase_at(thr, t) - (total - phase_at(th, p.duration - t))) < 1e-12 * std::abs(total));
  }
  FMPulse shifted = p;
  const double c = 1234.5;
  for (auto& m : shifted.mu) m += c;
  auto ths = mode_phase(shifted, w);
  for (std::size_t i = 0; i < th.size(); ++i) {
    CHECK(ths.slope[i] == doctest::Approx(th.slope[i] + c).epsilon(1e-15));
    CHECK(std::abs(ths.start[i] - th.start[i] - c * p.boundary(i)) < 1e-9);
  }
}

TEST_CASE("sampling is right-continuous") {
  FMPulse p;
  p.duration = 4e-6;
  p.mu = {10.0, 11.0, 12.0, 13.0};
  const std::vector<double> t = {0.0, 4e-6, 2.5e-6, 1e-6, 2e-6};
  CHECK(sample_mu(p, t) == std::vector<double>{10.0, 13.0, 12.0, 11.0, 12.0});
  CHECK_THROWS_AS(sample_mu(p, std::vector<double>{-1e-9}), ConfigError);
  CHECK_THROWS_AS(sample_mu(p, std::vector<double>{4.1e-6}), ConfigError);
}

TEST_CASE("pulse JSON round-trips bit-exactly") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_pulse(rng, 1 + trial % 9, 1e-4 * (1 + trial));
    p.spin_phase_sign = trial % 2 ? -1 : 1;
    const auto j = io::pulse_to_json(p);
    const auto text = j.dump();
    const auto q = io::pulse_from_json(nlohmann::json::parse(text));
    CHECK(q.mu == p.mu);
    CHECK(q.rabi == p.rabi);
    CHECK(q.duration == p.duration);
    CHECK(q.spin_phase_sign == p.spin_phase_sign);
    CHECK(io::pulse_to_json(q).dump() == text);
  }
  auto j = nlohmann::json::parse(R"({"tau_s":1e-4,"omega_rabi_hz":1.0,"segments_hz":[1.0,2.0,1.0],"symmetric":true})");
  auto p = io::pulse_from_json(j);
  CHECK(io::pulse_to_json(p).dump() == j.dump());
  CHECK_THROWS_AS(io::pulse_from_json(nlohmann::json::parse(R"({"tau_s":1e-4,"omega_rabi_hz":1,"segments_hz":[1,2],"symmetric":true})")),
                  ConfigError);
  CHECK_THROWS_AS(io::pulse_from_json(nlohmann::json::parse(R"({"tau_s":1e-4,"omega_rabi_hz":1,"segments_hz":[1],"extra":0})")),
                  ConfigError);
}
