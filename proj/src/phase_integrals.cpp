#include "msff/phase_integrals.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace msff {

LinearPhase LinearPhase::from_slopes(double width, std::vector<double> slopes, double phase0) {
  LinearPhase p;
  p.width = width;
  p.start.resize(slopes.size());
  double acc = phase0;
  for (std::size_t i = 0; i < slopes.size(); ++i) {
    p.start[i] = acc;
    acc += slopes[i] * width;
  }
  p.slope = std::move(slopes);
  return p;
}

namespace unit {

void moments(double a, int n_max, cplx* out) {
  const cplx ia(0.0, a);
  const cplx ea = std::polar(1.0, a);
  const double abs_a = std::abs(a);
  if (abs_a < 1.0) {
    // Downward recursion is stable for n > |a|; seed far above n_max.
    const int n0 = n_max + 25;
    cplx j = ea / (static_cast<double>(n0 + 1) + ia);
    for (int n = n0; n >= 1; --n) {
      if (n <= n_max) out[n] = j;
      j = (ea - ia * j) / static_cast<double>(n);
    }
    out[0] = j;
    return;
  }
  const int n_up = std::min(n_max, static_cast<int>(abs_a));
  const cplx inv_ia(0.0, -1.0 / a);
  out[0] = (ea - 1.0) * inv_ia;
  for (int n = 1; n <= n_up; ++n) out[n] = (ea - static_cast<double>(n) * out[n - 1]) * inv_ia;
  if (n_max > n_up) {
    const int n0 = n_max + 30 + static_cast<int>(2.0 * abs_a);
    cplx j = ea / (static_cast<double>(n0 + 1) + ia);
    for (int n = n0; n > n_up + 1; --n) {
      if (n <= n_max) out[n] = j;
      j = (ea - ia * j) / static_cast<double>(n);
    }
    out[n_up + 1] = j;
  }
}

namespace {

constexpr int kSeriesTerms = 48;

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

}  // namespace

void triangles(double a, double b, int p_max, int q_max, cplx* out) {
  const int stride = q_max + 1;
  // Scratch buffers are reused: zero-filling them on each call dominated the cost.
  thread_local std::array<cplx, kMaxOrder + kSeriesTerms + 4> j;
  if (p_max + q_max + kSeriesTerms + 2 > static_cast<int>(j.size()))
    throw std::out_of_range("unit::triangles: order too large");

  // The by-parts form loses about q! / |b|^(q+1) in absolute accuracy; use the series
  // below the point where that loss exceeds 1e3 ulp.
  static const auto limits = [] {
    std::array<double, kMaxOrder + 1> l{};
    for (int q = 0; q <= kMaxOrder; ++q)
      l[q] = std::max(0.05, std::pow(factorial(q) / 1e3, 1.0 / (q + 1)));
    return l;
  }();
  if (std::abs(b) <= limits[q_max]) {
    // Expand the inner exponential: T = Σ_v (ib)^v / (v! (q+v+1)) J_{p+q+v+1}(a).
    // Truncate once |b|^v / v! falls below double precision.
    std::array<cplx, kSeriesTerms + 1> coef;
    cplx pw(1.0, 0.0);
    int terms = 0;
    for (; terms < kSeriesTerms; ++terms) {
      coef[terms] = pw;
      if (std::norm(pw) < 1e-36) break;
      pw *= cplx(0.0, b) / static_cast<double>(terms + 1);
    }
    if (terms == kSeriesTerms) coef[terms] = pw;
    moments(a, p_max + q_max + terms + 1, j.data());
    for (int p = 0; p <= p_max; ++p)
      for (int q = 0; q <= q_max; ++q) {
        cplx s(0.0, 0.0);
        for (int v = terms; v >= 0; --v)
          s += coef[v] / static_cast<double>(q + v + 1) * j[p + q + v + 1];
        out[p * stride + q] = s;
      }
    return;
  }

  // Otherwise close the inner integral by parts; the outer moments are stable for any a.
  // ∫_0^x y^q e^{iby} dy = e^{ibx} Σ_r c_{q,r} x^{q-r} - c_{q,q},
  // c_{q,r} = (-1)^r q!/(q-r)! / (ib)^{r+1}.
  thread_local std::array<cplx, kMaxOrder + 2> jab;
  thread_local std::array<cplx, kMaxOrder + 2> ja;
  moments(a + b, p_max + q_max, jab.data());
  moments(a, p_max, ja.data());
  const cplx ib(0.0, b);
  for (int q = 0; q <= q_max; ++q) {
    thread_local std::array<cplx, kMaxOrder + 2> c;
    cplx denom = ib;
    for (int r = 0; r <= q; ++r) {
      const double sign = (r % 2 == 0) ? 1.0 : -1.0;
      c[r] = sign * factorial(q) / factorial(q - r) / denom;
      denom *= ib;
    }
    for (int p = 0; p <= p_max; ++p) {
      cplx s(0.0, 0.0);
      for (int r = 0; r <= q; ++r) s += c[r] * jab[p + q - r];
      s -= c[q] * ja[p];
      out[p * stride + q] = s;
    }
  }
}

cplx triangle(int p, int q, double a, double b) {
  std::array<cplx, (kMaxOrder + 1) * (kMaxOrder + 1)> buf{};
  triangles(a, b, p, q, buf.data());
  return buf[p * (q + 1) + q];
}

}  // namespace unit

namespace {

constexpr int kMaxPoly = 16;

struct Binomials {
  std::array<std::array<double, kMaxPoly + 1>, kMaxPoly + 1> c{};
  Binomials() {
    for (int n = 0; n <= kMaxPoly; ++n) {
      c[n][0] = 1.0;
      for (int k = 1; k <= n; ++k) c[n][k] = c[n - 1][k - 1] + (k <= n - 1 ? c[n - 1][k] : 0.0);
    }
  }
};

const Binomials& binom() {
  static const Binomials b;
  return b;
}

void check_order(int n) {
  if (n < 0 || n > kMaxPoly - 2) throw std::out_of_range("phase integral: polynomial order out of range");
}

// x^0 .. x^n.
void powers(double x, int n, double* out) {
  out[0] = 1.0;
  for (int k = 1; k <= n; ++k) out[k] = out[k - 1] * x;
}

// ∫_{segment i} t^n (t - t_i)^e w e^{i phi} dt, for e = 0..e_max; out[e].
void segment_moment(const LinearPhase& ph, std::size_t i, int n, int e_max, cplx* out) {
  const double w = ph.width;
  const double ti = w * static_cast<double>(i);
  thread_local std::array<cplx, kMaxPoly + 4> j;
  unit::moments(ph.slope[i] * w, n + e_max, j.data());
  const cplx pref = ph.amplitude(i) * std::polar(1.0, ph.start[i]);
  if (n == 0) {
    double wpow = w;
    for (int e = 0; e <= e_max; ++e) {
      out[e] = pref * wpow * j[e];
      wpow *= w;
    }
    return;
  }
  std::array<double, kMaxPoly + 4> tp{}, wp{};
  powers(ti, n, tp.data());
  powers(w, n + e_max + 1, wp.data());
  const auto& bc = binom().c;
  for (int e = 0; e <= e_max; ++e) {
    cplx s(0.0, 0.0);
    for (int a = 0; a <= n; ++a) s += bc[n][a] * tp[n - a] * wp[a + e + 1] * j[a + e];
    out[e] = pref * s;
  }
}

// Diagonal triangle of segment i with t1^n (t1-ti)^e1, t2^m (t2-ti)^e2; out[e1*(e_max+1)+e2].
void segment_triangle(const LinearPhase& outer, const LinearPhase& inner, std::size_t i, int n,
                      int m, int e_max, cplx* out) {
  const double w = outer.width;
  const double ti = w * static_cast<double>(i);
  const int pm = n + e_max;
  const int qm = m + e_max;
  thread_local std::array<cplx, (kMaxPoly + 2) * (kMaxPoly + 2)> t;
  unit::triangles(outer.slope[i] * w, inner.slope[i] * w, pm, qm, t.data());
  const cplx pref = outer.amplitude(i) * inner.amplitude(i) *
                    std::polar(1.0, outer.start[i] + inner.start[i]);
  std::array<double, 2 * kMaxPoly + 8> tp{}, wp{};
  powers(ti, n + m, tp.data());
  powers(w, n + m + 2 * e_max + 2, wp.data());
  const auto& bc = binom().c;
  for (int e1 = 0; e1 <= e_max; ++e1)
    for (int e2 = 0; e2 <= e_max; ++e2) {
      cplx s(0.0, 0.0);
      for (int a = 0; a <= n; ++a)
        for (int b = 0; b <= m; ++b) {
          const double c = bc[n][a] * bc[m][b] * tp[n - a + m - b] * wp[a + b + e1 + e2 + 2];
          s += c * t[(a + e1) * (qm + 1) + (b + e2)];
        }
      out[e1 * (e_max + 1) + e2] = pref * s;
    }
}

void check_grid(const LinearPhase& a, const LinearPhase& b) {
  if (a.size() != b.size() || a.width != b.width)
    throw std::invalid_argument("ordered_integral: phases must share the segment grid");
}

}  // namespace

cplx single_integral(const LinearPhase& phase, int n) {
  check_order(n);
  cplx total(0.0, 0.0);
  cplx seg[1];
  for (std::size_t i = 0; i < phase.size(); ++i) {
    segment_moment(phase, i, n, 0, seg);
    total += seg[0];
  }
  return total;
}

cplx single_integral(const LinearPhase& phase, int n, double kappa, std::span<cplx> grad) {
  check_order(n);
  const std::size_t s = phase.size();
  if (grad.size() != s) throw std::invalid_argument("single_integral: gradient size mismatch");
  std::vector<cplx> base(s), local(s);
  cplx seg[2];
  for (std::size_t i = 0; i < s; ++i) {
    segment_moment(phase, i, n, 1, seg);
    base[i] = seg[0];
    local[i] = seg[1];
  }
  const cplx ik(0.0, kappa);
  cplx suffix(0.0, 0.0);
  cplx total(0.0, 0.0);
  for (std::size_t l = s; l-- > 0;) {
    grad[l] += ik * (phase.width * suffix + local[l]);
    suffix += base[l];
  }
  for (std::size_t i = 0; i < s; ++i) total += base[i];
  return total;
}

std::vector<cplx> single_integral_prefix(const LinearPhase& phase, int n,
                                         std::span<const std::size_t> counts) {
  check_order(n);
  std::vector<cplx> out;
  out.reserve(counts.size());
  cplx total(0.0, 0.0);
  cplx seg[1];
  std::size_t next = 0;
  for (std::size_t i = 0; i <= phase.size(); ++i) {
    while (next < counts.size() && counts[next] == i) {
      out.push_back(total);
      ++next;
    }
    if (i == phase.size()) break;
    segment_moment(phase, i, n, 0, seg);
    total += seg[0];
  }
  if (out.size() != counts.size())
    throw std::invalid_argument("single_integral_prefix: counts must be ascending and in range");
  return out;
}

cplx ordered_integral(const LinearPhase& outer, int n, const LinearPhase& inner, int m) {
  check_order(n);
  check_order(m);
  check_grid(outer, inner);
  cplx total(0.0, 0.0);
  cplx inner_cum(0.0, 0.0);
  cplx g[1], h[1], tri[1];
  for (std::size_t i = 0; i < outer.size(); ++i) {
    segment_moment(outer, i, n, 0, g);
    segment_moment(inner, i, m, 0, h);
    segment_triangle(outer, inner, i, n, m, 0, tri);
    total += g[0] * inner_cum + tri[0];
    inner_cum += h[0];
  }
  return total;
}

cplx ordered_integral(const LinearPhase& outer, int n, const LinearPhase& inner, int m,
                      double kappa_outer, double kappa_inner, std::span<cplx> grad) {
  check_order(n);
  check_order(m);
  check_grid(outer, inner);
  const std::size_t s = outer.size();
  if (grad.size() != s) throw std::invalid_argument("ordered_integral: gradient size mismatch");
  std::vector<cplx> g(s), h(s), tri(s), dg(s), dh(s), dtri(s), h_before(s);
  const cplx iko(0.0, kappa_outer), iki(0.0, kappa_inner);
  cplx gs[2], hs[2], ts[4];
  cplx cum(0.0, 0.0);
  cplx total(0.0, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    segment_moment(outer, i, n, 1, gs);
    segment_moment(inner, i, m, 1, hs);
    segment_triangle(outer, inner, i, n, m, 1, ts);
    g[i] = gs[0];
    h[i] = hs[0];
    tri[i] = ts[0];
    dg[i] = iko * gs[1];
    dh[i] = iki * hs[1];
    dtri[i] = iko * ts[2] + iki * ts[1];
    h_before[i] = cum;
    total += g[i] * cum + tri[i];
    cum += h[i];
  }
  // Suffix sums over i > l: A1 = Σ g_i H_{<i}, A2 = Σ g_i, A3 = Σ tri_i.
  const double w = outer.width;
  cplx a1(0.0, 0.0), a2(0.0, 0.0), a3(0.0, 0.0);
  for (std::size_t l = s; l-- > 0;) {
    const cplx h_upto = h_before[l] + h[l];
    grad[l] += iko * w * a1 + iki * w * (a1 - h_upto * a2) + dh[l] * a2 +
               (iko + iki) * w * a3 + dg[l] * h_before[l] + dtri[l];
    a1 += g[l] * h_before[l];
    a2 += g[l];
    a3 += tri[l];
  }
  return total;
}

std::vector<cplx> ordered_integral_prefix(const LinearPhase& outer, int n, const LinearPhase& inner,
                                          int m, std::span<const std::size_t> counts) {
  check_order(n);
  check_order(m);
  check_grid(outer, inner);
  std::vector<cplx> out;
  out.reserve(counts.size());
  cplx total(0.0, 0.0);
  cplx cum(0.0, 0.0);
  cplx g[1], h[1], tri[1];
  std::size_t next = 0;
  for (std::size_t i = 0; i <= outer.size(); ++i) {
    while (next < counts.size() && counts[next] == i) {
      out.push_back(total);
      ++next;
    }
    if (i == outer.size()) break;
    segment_moment(outer, i, n, 0, g);
    segment_moment(inner, i, m, 0, h);
    segment_triangle(outer, inner, i, n, m, 0, tri);
    total += g[0] * cum + tri[0];
    cum += h[0];
  }
  if (out.size() != counts.size())
    throw std::invalid_argument("ordered_integral_prefix: counts must be ascending and in range");
  return out;
}

}  // namespace msff
