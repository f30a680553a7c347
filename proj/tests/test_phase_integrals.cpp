#include "doctest.h"
#include "msff/phase_integrals.hpp"
#include "oracles.hpp"

#include <random>

using msff::cplx;
using msff::LinearPhase;

namespace {

double eval_phase(const LinearPhase& p, double t) {
  std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t / p.width), p.size() - 1);
  return p.start[i] + p.slope[i] * (t - p.width * i);
}

double eval_weight(const LinearPhase& p, double t) {
  std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t / p.width), p.size() - 1);
  return p.amplitude(i);
}

std::vector<double> breaks_of(const LinearPhase& p) {
  std::vector<double> b;
  for (std::size_t i = 0; i <= p.size(); ++i) b.push_back(p.width * i);
  return b;
}

LinearPhase random_phase(std::mt19937_64& rng, std::size_t n, double width, double slope_scale,
                         bool weighted) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> slopes(n);
  for (auto& s : slopes) s = slope_scale * nd(rng);
  if (n > 2) slopes[1] = 0.0;         // exact resonance
  if (n > 3) slopes[2] = 1e-9 / width;  // near resonance
  auto p = LinearPhase::from_slopes(width, slopes, nd(rng));
  if (weighted) {
    p.weight.resize(n);
    for (auto& w : p.weight) w = 1.0 + 0.3 * nd(rng);
  }
  return p;
}

}  // namespace

TEST_CASE("unit moments agree with quadrature for all argument regimes") {
  const std::vector<double> args = {0.0, 1e-10, -3e-4, 0.3, 0.999, 1.0, 1.5, -2.5, 7.0, 40.0, -300.0};
  for (double a : args) {
    std::vector<cplx> j(13);
    msff::unit::moments(a, 12, j.data());
    for (int n = 0; n <= 12; ++n) {
      auto f = [&](double x) { return std::pow(x, n) * std::polar(1.0, a * x); };
      const cplx ref = oracle::integrate(f, {0.0, 1.0}, 64);
      CHECK(std::abs(j[n] - ref) < 1e-13 * std::max(1.0, std::abs(ref)) + 1e-15);
    }
  }
}

TEST_CASE("unit triangles agree with nested quadrature") {
  const std::vector<double> args = {0.0, 1e-8, 0.4, -0.95, 1.2, -3.0, 9.0, 60.0};
  for (double a : args)
    for (double b : args) {
      for (int p = 0; p <= 3; ++p)
        for (int q = 0; q <= 3; ++q) {
          auto g = [&](double x) { return std::pow(x, p) * std::polar(1.0, a * x); };
          auto h = [&](double y) { return std::pow(y, q) * std::polar(1.0, b * y); };
          const cplx ref = oracle::ordered(g, h, {0.0, 1.0}, 48);
          const cplx got = msff::unit::triangle(p, q, a, b);
          INFO("a=" << a << " b=" << b << " p=" << p << " q=" << q);
          CHECK(std::abs(got - ref) < 1e-12 * std::max(1.0, std::abs(ref)));
        }
    }
}

TEST_CASE("single and ordered integrals match brute-force quadrature on random phases") {
  std::mt19937_64 rng(7);
  const double width = 3.75e-6;
  for (int trial = 0; trial < 12; ++trial) {
    const bool weighted = trial % 2 == 1;
    const double scale = trial < 6 ? 2e5 : 3e6;
    auto outer = random_phase(rng, 9, width, scale, weighted);
    auto inner = random_phase(rng, 9, width, scale, weighted);
    const auto br = breaks_of(outer);
    for (int n = 0; n <= 3; ++n) {
      auto f = [&](double t) {
        return std::pow(t, n) * eval_weight(outer, t) * std::polar(1.0, eval_phase(outer, t));
      };
      CHECK(oracle::rel_err(msff::single_integral(outer, n), oracle::integrate(f, br, 16)) < 1e-11);
    }
    for (int n = 0; n <= 2; ++n)
      for (int m = 0; m <= 2; ++m) {
        auto g = [&](double t) {
          return std::pow(t, n) * eval_weight(outer, t) * std::polar(1.0, eval_phase(outer, t));
        };
        auto h = [&](double t) {
          return std::pow(t, m) * eval_weight(inner, t) * std::polar(1.0, eval_phase(inner, t));
        };
        const cplx ref = oracle::ordered(g, h, br, 16);
        CHECK(oracle::rel_err(msff::ordered_integral(outer, n, inner, m), ref) < 1e-10);
      }
  }
}

TEST_CASE("gradients match central finite differences of the slope parameters") {
  std::mt19937_64 rng(11);
  const double width = 2e-6;
  const std::size_t s = 7;
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> base_o(s), base_i(s);
  for (auto& v : base_o) v = 3e5 * nd(rng);
  for (auto& v : base_i) v = 3e5 * nd(rng);
  const double ko = 1.0, ki = -1.0;
  auto build = [&](const std::vector<double>& base, double kappa, std::size_t l, double dp) {
    auto sl = base;
    sl[l] += kappa * dp;
    return LinearPhase::from_slopes(width, sl, 0.2);
  };
  std::vector<cplx> g1(s), g2(s);
  auto po = LinearPhase::from_slopes(width, base_o, 0.2);
  auto pi = LinearPhase::from_slopes(width, base_i, 0.2);
  msff::single_integral(po, 2, ko, g1);
  msff::ordered_integral(po, 1, pi, 0, ko, ki, g2);
  const double h = 1.0;
  for (std::size_t l = 0; l < s; ++l) {
    const cplx fd1 = (msff::single_integral(build(base_o, ko, l, h), 2) -
                      msff::single_integral(build(base_o, ko, l, -h), 2)) / (2.0 * h);
    CHECK(oracle::rel_err(g1[l], fd1) < 1e-7);
    const cplx fd2 = (msff::ordered_integral(build(base_o, ko, l, h), 1, build(base_i, ki, l, h), 0) -
                      msff::ordered_integral(build(base_o, ko, l, -h), 1, build(base_i, ki, l, -h), 0)) /
                     (2.0 * h);
    CHECK(oracle::rel_err(g2[l], fd2) < 1e-7);
  }
}

TEST_CASE("prefix values reproduce truncated integrals") {
  std::mt19937_64 rng(3);
  auto p = random_phase(rng, 12, 1e-6, 5e5, true);
  const std::vector<std::size_t> counts = {0, 4, 12};
  auto single = msff::single_integral_prefix(p, 1, counts);
  auto dbl = msff::ordered_integral_prefix(p, 0, p, 0, counts);
  CHECK(std::abs(single[0]) == 0.0);
  CHECK(oracle::rel_err(single[2], msff::single_integral(p, 1)) < 1e-14);
  CHECK(oracle::rel_err(dbl[2], msff::ordered_integral(p, 0, p, 0)) < 1e-14);
  LinearPhase head = p;
  head.slope.resize(4);
  head.start.resize(4);
  head.weight.resize(4);
  CHECK(oracle::rel_err(dbl[1], msff::ordered_integral(head, 0, head, 0)) < 1e-14);
}
