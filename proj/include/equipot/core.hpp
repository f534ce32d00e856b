#pragma once

#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace equipot {

/** Short scientific rendering for diagnostics (to_string flattens 1e-7 to 0). */
inline std::string fmt_g(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NotPositive : public Error {
 public:
  using Error::Error;
};

class NotAdmissible : public Error {
 public:
  using Error::Error;
};

class MeanNotZero : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, int iterations, double residual)
      : Error(what), iterations(iterations), residual(residual) {}
  int iterations;
  double residual;
};

/**
 * Uniform periodic grid on the torus R^{2 ndim} / Z^{2 ndim}.
 *
 * ndim is the complex dimension (1 fully supported, 2 experimental); each of
 * the 2*ndim real axes carries n samples at spacing h = 1/n, so the grid has
 * n^(2 ndim) points and unit total volume. n must be even (symmetric spectral
 * differentiation needs a well-defined Nyquist mode) and at least 8.
 */
struct Grid {
  int ndim = 1;
  int n = 0;

  Grid() = default;
  Grid(int ndim_, int n_) : ndim(ndim_), n(n_) {
    if (ndim < 1 || ndim > 2) throw InvalidArgument("grid: ndim must be 1 or 2");
    if (n < 8) throw InvalidArgument("grid: n must be at least 8");
    if (n % 2 != 0) throw InvalidArgument("grid: n must be even");
  }

  int axes() const { return 2 * ndim; }
  double h() const { return 1.0 / n; }
  std::size_t point_count() const {
    std::size_t p = 1;
    for (int a = 0; a < axes(); ++a) p *= static_cast<std::size_t>(n);
    return p;
  }
  double cell_volume() const {
    double w = 1.0;
    for (int a = 0; a < axes(); ++a) w *= h();
    return w;
  }
  bool operator==(const Grid& o) const { return ndim == o.ndim && n == o.n; }
};

/** Real scalar field sampled on a Grid, row-major over the 2*ndim axes. */
struct Field {
  Grid grid;
  std::vector<double> v;

  Field() = default;
  explicit Field(const Grid& g, double fill = 0.0) : grid(g), v(g.point_count(), fill) {}

  std::size_t size() const { return v.size(); }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
};

inline void check_same_grid(const Field& a, const Field& b, const char* where) {
  if (!(a.grid == b.grid) || a.v.size() != b.v.size())
    throw InvalidArgument(std::string(where) + ": grid mismatch");
}

}  // namespace equipot
