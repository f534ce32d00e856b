#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "core.hpp"
#include "fft.hpp"

namespace equipot {

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double four_pi_sq = two_pi * two_pi;

/**
 * Quadrature of a grid field: h^(2 ndim) times the compensated (Kahan) sum of
 * the values. Exact to rounding for trigonometric polynomials below the
 * aliasing limit, which is what makes the mass identities in the measure code
 * hold to ~1e-15 relative.
 */
inline double integrate(const Field& f) {
  double s = 0.0, c = 0.0;
  for (const double x : f.v) {
    const double y = x - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s * f.grid.cell_volume();
}

inline double sup(const Field& f) { return *std::max_element(f.v.begin(), f.v.end()); }
inline double inf(const Field& f) { return *std::min_element(f.v.begin(), f.v.end()); }

inline double sup_abs(const Field& f) {
  double m = 0.0;
  for (const double x : f.v) m = std::max(m, std::abs(x));
  return m;
}

inline double sup_abs_diff(const Field& a, const Field& b) {
  check_same_grid(a, b, "sup_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

/** Mean-zero spectral Laplacian (periodic, symbol -4 pi^2 |k|^2). */
inline Field laplacian(const Field& f) {
  const int axes = f.grid.axes();
  return fft::apply_symbol(f, [axes](const int* k) {
    double ksq = 0.0;
    for (int a = 0; a < axes; ++a) ksq += static_cast<double>(k[a]) * k[a];
    return -four_pi_sq * ksq;
  });
}

/**
 * Solves laplacian(u) = rhs - mean(rhs) for the mean-zero u.
 *
 * The discrete Laplacian annihilates constants, so a solution only exists for
 * mean-zero data; rhs whose integral exceeds tol_mean in absolute value is
 * rejected with MeanNotZero rather than silently projected.
 */
inline Field poisson_solve(const Field& rhs, double tol_mean = 1e-8) {
  const double mean = integrate(rhs);
  if (std::abs(mean) > tol_mean)
    throw MeanNotZero("poisson_solve: |mean(rhs)| = " + fmt_g(std::abs(mean)) +
                      " exceeds tol_mean = " + fmt_g(tol_mean));
  const int axes = rhs.grid.axes();
  return fft::apply_symbol(rhs, [axes](const int* k) {
    double ksq = 0.0;
    for (int a = 0; a < axes; ++a) ksq += static_cast<double>(k[a]) * k[a];
    return ksq == 0.0 ? 0.0 : -1.0 / (four_pi_sq * ksq);
  });
}

/** Pointwise sup of the Euclidean gradient norm (Nyquist modes dropped, as
 *  required for odd-order spectral derivatives on an even grid). */
inline double gradient_sup(const Field& f) {
  const int axes = f.grid.axes();
  const int nyq = f.grid.n / 2;
  std::vector<double> sq(f.v.size(), 0.0);
  for (int a = 0; a < axes; ++a) {
    Field da = fft::apply_symbol(f, [a, nyq](const int* k) {
      if (std::abs(k[a]) == nyq) return std::complex<double>(0.0, 0.0);
      return std::complex<double>(0.0, two_pi * k[a]);
    });
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] += da.v[i] * da.v[i];
  }
  double m = 0.0;
  for (const double x : sq) m = std::max(m, x);
  return std::sqrt(m);
}

/**
 * Entries of the scaled complex Hessian on a complex-2D grid (axes ordered
 * x1, y1, x2, y2). The scaling matches the one-dimensional convention where
 * the diagonal entry is the per-coordinate-pair Laplacian, i.e.
 * H_jj = (d^2/dx_j^2 + d^2/dy_j^2) f, H_12 = re12 + i im12.
 */
struct HessianEntries {
  Field h11, h22, re12, im12;
};

inline HessianEntries complex_hessian(const Field& f) {
  if (f.grid.ndim != 2) throw InvalidArgument("complex_hessian: requires ndim = 2");
  const int nyq = f.grid.n / 2;
  auto pure = [&](int a, int b) {
    return fft::apply_symbol(f, [a, b](const int* k) {
      return -four_pi_sq * (static_cast<double>(k[a]) * k[a] + static_cast<double>(k[b]) * k[b]);
    });
  };
  auto mixed = [&](int a, int b, int c, int d, double sign) {
    // Symbol -4 pi^2 (k_a k_b + sign k_c k_d); ambiguous Nyquist modes are
    // zeroed because the sign of k at n/2 is not determined.
    return fft::apply_symbol(f, [a, b, c, d, sign, nyq](const int* k) {
      if (std::abs(k[a]) == nyq || std::abs(k[b]) == nyq || std::abs(k[c]) == nyq ||
          std::abs(k[d]) == nyq)
        return 0.0;
      return -four_pi_sq * (static_cast<double>(k[a]) * k[b] +
                            sign * static_cast<double>(k[c]) * k[d]);
    });
  };
  HessianEntries h;
  h.h11 = pure(0, 1);
  h.h22 = pure(2, 3);
  h.re12 = mixed(0, 2, 1, 3, +1.0);  // dx1 dx2 + dy1 dy2
  h.im12 = mixed(0, 3, 1, 2, -1.0);  // dx1 dy2 - dy1 dx2
  return h;
}

/** Field of cos(2 pi k.x) scaled by amp; k has one entry per real axis. */
inline Field cos_mode(const Grid& g, const std::vector<int>& k, double amp) {
  if (static_cast<int>(k.size()) != g.axes())
    throw InvalidArgument("cos_mode: frequency vector must have one entry per real axis");
  Field f(g);
  const int axes = g.axes();
  const int n = g.n;
  std::vector<int> idx(axes, 0);
  for (std::size_t i = 0; i < f.v.size(); ++i) {
    long phase = 0;
    for (int a = 0; a < axes; ++a) phase += static_cast<long>(k[a]) * idx[a];
    // phase/n in turns; reduce mod n first so cos() sees a small argument
    const long r = ((phase % n) + n) % n;
    f.v[i] = amp * std::cos(two_pi * static_cast<double>(r) / n);
    for (int a = axes - 1; a >= 0; --a) {
      if (++idx[a] < n) break;
      idx[a] = 0;
    }
  }
  return f;
}

inline Field constant_field(const Grid& g, double c) { return Field(g, c); }

// Small field algebra used throughout the solvers.
inline Field& operator+=(Field& a, const Field& b) {
  check_same_grid(a, b, "field +=");
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}
inline Field& operator-=(Field& a, const Field& b) {
  check_same_grid(a, b, "field -=");
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] -= b.v[i];
  return a;
}
inline Field& operator*=(Field& a, double s) {
  for (double& x : a.v) x *= s;
  return a;
}
inline Field operator+(Field a, const Field& b) { return a += b; }
inline Field operator-(Field a, const Field& b) { return a -= b; }
inline Field operator*(double s, Field a) { return a *= s; }

inline Field& shift(Field& a, double c) {
  for (double& x : a.v) x += c;
  return a;
}

inline Field pointwise_max(const Field& a, const Field& b) {
  check_same_grid(a, b, "pointwise_max");
  Field r = a;
  for (std::size_t i = 0; i < r.v.size(); ++i) r.v[i] = std::max(r.v[i], b.v[i]);
  return r;
}

inline constexpr double exp_clamp_threshold = 40.0;

/** Pointwise exp with the argument clamped at +40 (e^40 ~ 2.4e17, safely in
 *  double range); sets clamped if the clamp fired anywhere. */
inline Field exp_clamped(const Field& a, bool& clamped) {
  Field r(a.grid);
  clamped = false;
  for (std::size_t i = 0; i < r.v.size(); ++i) {
    double x = a.v[i];
    if (x > exp_clamp_threshold) {
      x = exp_clamp_threshold;
      clamped = true;
    }
    r.v[i] = std::exp(x);
  }
  return r;
}

inline void add_scaled(Field& dst, double s, const Field& src) {
  check_same_grid(dst, src, "add_scaled");
  for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += s * src.v[i];
}

inline double dot(const Field& a, const Field& b) {
  check_same_grid(a, b, "dot");
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double y = a.v[i] * b.v[i] - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

}  // namespace equipot
