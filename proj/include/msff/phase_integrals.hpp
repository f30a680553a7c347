#pragma once

// Closed-form integrals of polynomial-weighted exponentials of a
// piecewise-linear phase on a uniform segment grid.
//
// Every quantity of the MS gate (displacements, rotation angle, filter
// functions, their gradients) reduces to one of two shapes:
//
//   single:  I_n      = ∫_0^T t^n w(t) e^{i phi(t)} dt
//   ordered: D_{n,m}  = ∫_0^T dt1 t1^n w(t1) e^{i phi(t1)} ∫_0^{t1} dt2 t2^m w(t2) e^{i psi(t2)}
//
// where phi, psi are continuous piecewise-linear and w is piecewise constant.
// Segment-local pieces are evaluated through the unit-interval moments
//   J_n(a)      = ∫_0^1 x^n e^{iax} dx
//   T_{p,q}(a,b) = ∫_0^1 dx x^p e^{iax} ∫_0^x dy y^q e^{iby}
// using recursions that stay accurate for every a, b (including a -> 0).

#include <cstddef>
#include <span>
#include <vector>

#include "msff/common.hpp"

namespace msff {

/// phi(t) = start[i] + slope[i] * (t - i * width) on segment i.
struct LinearPhase {
  double width = 0.0;
  std::vector<double> start;
  std::vector<double> slope;
  /// Optional per-segment amplitude; empty means 1 everywhere.
  std::vector<double> weight;

  std::size_t size() const { return slope.size(); }
  double duration() const { return width * static_cast<double>(slope.size()); }
  double amplitude(std::size_t i) const { return weight.empty() ? 1.0 : weight[i]; }

  /// Builds a continuous phase from slopes with phi(0) = phase0.
  static LinearPhase from_slopes(double width, std::vector<double> slopes, double phase0 = 0.0);
};

namespace unit {

inline constexpr int kMaxOrder = 40;

/// J_0..J_n_max at argument a; out must hold n_max + 1 values.
void moments(double a, int n_max, cplx* out);

/// T_{p,q}(a, b) for p <= p_max, q <= q_max, stored row-major out[p * (q_max + 1) + q].
void triangles(double a, double b, int p_max, int q_max, cplx* out);

cplx triangle(int p, int q, double a, double b);

}  // namespace unit

/// ∫ t^n w e^{i phi} over the whole grid.
cplx single_integral(const LinearPhase& phase, int n);

/// Same, and accumulates d/dp_l into grad, where parameter p_l shifts the slope of
/// segment l by kappa per unit (and every later segment start by kappa * width).
cplx single_integral(const LinearPhase& phase, int n, double kappa, std::span<cplx> grad);

/// Running values of I_n after the first counts[c] segments.
std::vector<cplx> single_integral_prefix(const LinearPhase& phase, int n,
                                         std::span<const std::size_t> counts);

/// Ordered double integral D_{n,m}; outer and inner must share the grid.
cplx ordered_integral(const LinearPhase& outer, int n, const LinearPhase& inner, int m);

/// Ordered double integral with gradient, parameterized as in single_integral. The
/// outer phase depends on p_l with coefficient kappa_outer, the inner with kappa_inner.
cplx ordered_integral(const LinearPhase& outer, int n, const LinearPhase& inner, int m,
                      double kappa_outer, double kappa_inner, std::span<cplx> grad);

std::vector<cplx> ordered_integral_prefix(const LinearPhase& outer, int n,
                                          const LinearPhase& inner, int m,
                                          std::span<const std::size_t> counts);

}  // namespace msff
