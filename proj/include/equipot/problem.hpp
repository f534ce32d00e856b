#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "grid.hpp"

namespace equipot {

inline constexpr double tol_pos = 1e-8;  // strict positivity margin for densities

/**
 * A background form given by its positive density against the flat volume.
 * mass is the cached integral of the density; all solver normalizations
 * divide by it, so it is validated strictly positive on construction.
 */
struct KahlerForm {
  Field density;
  double mass = 0.0;
};

inline KahlerForm make_form(Field density) {
  if (inf(density) <= tol_pos)
    throw NotPositive("make_form: density must exceed " + fmt_g(tol_pos) +
                      " pointwise, min = " + fmt_g(inf(density)));
  KahlerForm f;
  f.mass = integrate(density);
  f.density = std::move(density);
  return f;
}

/**
 * Form in the class of the constant form of mass c, deformed by a potential:
 * density = c + lap(psi). The Laplacian integrates to zero, so the mass is
 * exactly c. Throws NotPositive if psi is large enough to break positivity.
 */
inline KahlerForm form_from_potential(double c, const Field& psi) {
  if (c <= 0.0) throw NotPositive("form_from_potential: mass must be positive");
  Field d = laplacian(psi);
  shift(d, c);
  return make_form(std::move(d));
}

/** Pointwise max of cosine modes; used to build continuous but non-smooth
 *  weights. Each term is amps[i] * cos(2 pi ks[i].x). */
inline Field max_of_modes(const Grid& g, const std::vector<std::vector<int>>& ks,
                          const std::vector<double>& amps) {
  if (ks.empty() || ks.size() != amps.size())
    throw InvalidArgument("max_of_modes: need matching, nonempty mode/amp lists");
  Field f = cos_mode(g, ks[0], amps[0]);
  for (std::size_t t = 1; t < ks.size(); ++t) {
    const Field c = cos_mode(g, ks[t], amps[t]);
    for (std::size_t i = 0; i < f.v.size(); ++i) f.v[i] = std::max(f.v[i], c.v[i]);
  }
  return f;
}

/**
 * One coupled problem instance: m background forms and the continuous weight
 * on a common grid. smooth_weight gates the regularity monitors, which are
 * only meaningful when the weight has spectral decay.
 */
struct ProblemData {
  Grid grid;
  std::vector<KahlerForm> forms;
  Field weight;
  bool smooth_weight = true;

  ProblemData(Grid g, std::vector<KahlerForm> fs, Field w, bool smooth = true)
      : grid(g), forms(std::move(fs)), weight(std::move(w)), smooth_weight(smooth) {
    if (forms.empty()) throw InvalidArgument("ProblemData: needs at least one form");
    for (const auto& f : forms) check_same_grid(f.density, weight, "ProblemData");
    check_same_grid(Field(grid), weight, "ProblemData");
  }

  int m() const { return static_cast<int>(forms.size()); }

  /** Sum of the form densities. */
  Field total_density() const {
    Field r = forms[0].density;
    for (std::size_t j = 1; j < forms.size(); ++j) r += forms[j].density;
    return r;
  }

  /** Sum of the form masses. */
  double total_mass() const {
    double s = 0.0;
    for (const auto& f : forms) s += f.mass;
    return s;
  }
};

/** Trivial instance: m constant unit-mass forms, zero weight. The coupled
 *  system is solved exactly by zero potentials, which anchors the residual
 *  conventions of every solver. */
inline ProblemData trivial_problem(const Grid& g, int m) {
  if (m < 1) throw InvalidArgument("trivial_problem: m must be at least 1");
  std::vector<KahlerForm> fs;
  fs.reserve(m);
  for (int j = 0; j < m; ++j) fs.push_back(make_form(Field(g, 1.0)));
  return ProblemData(g, std::move(fs), Field(g, 0.0));
}

/** Invariant re-check over a ProblemData built by whatever path; returns a
 *  list of human-readable violations, empty when valid. */
inline std::vector<std::string> validate(const ProblemData& data) {
  std::vector<std::string> bad;
  if (data.forms.empty()) bad.push_back("no forms");
  for (std::size_t j = 0; j < data.forms.size(); ++j) {
    const auto& f = data.forms[j];
    if (!(f.density.grid == data.grid))
      bad.push_back("grid mismatch on form " + std::to_string(j + 1));
    const double lo = inf(f.density);
    if (lo <= 0.0)
      bad.push_back("form " + std::to_string(j + 1) +
                    " density not positive, min = " + fmt_g(lo));
    const double v = integrate(f.density);
    if (f.mass <= 0.0 || std::abs(f.mass - v) > 1e-12 * std::max(1.0, std::abs(v)))
      bad.push_back("form " + std::to_string(j + 1) + " cached mass " +
                    fmt_g(f.mass) + " disagrees with integral " + fmt_g(v));
  }
  if (!(data.weight.grid == data.grid)) bad.push_back("grid mismatch on weight");
  for (const double x : data.weight.v)
    if (!std::isfinite(x)) {
      bad.push_back("weight has non-finite values");
      break;
    }
  return bad;
}

/**
 * Constant positive-definite Hermitian metric on a complex-2D torus, for the
 * experimental backend: entries g11, g22 real, g12 = re12 + i im12.
 */
struct Metric2 {
  double g11 = 1.0, g22 = 1.0, re12 = 0.0, im12 = 0.0;

  double det() const { return g11 * g22 - re12 * re12 - im12 * im12; }
};

inline void check_metric(const Metric2& g) {
  if (!(g.g11 > 0.0) || !(g.det() > 0.0))
    throw NotPositive("Metric2: matrix is not positive definite");
}

/** Problem instance for the complex-2D backend: constant metrics plus a
 *  weight on an ndim = 2 grid. Masses are det(g_j) (unit-volume torus). */
struct Problem2 {
  Grid grid;
  std::vector<Metric2> metrics;
  Field weight;

  Problem2(Grid g, std::vector<Metric2> ms, Field w)
      : grid(g), metrics(std::move(ms)), weight(std::move(w)) {
    if (grid.ndim != 2) throw InvalidArgument("Problem2: requires ndim = 2");
    if (metrics.empty()) throw InvalidArgument("Problem2: needs at least one metric");
    for (const auto& m : metrics) check_metric(m);
    check_same_grid(Field(grid), weight, "Problem2");
  }

  int m() const { return static_cast<int>(metrics.size()); }

  double total_mass() const {
    double s = 0.0;
    for (const auto& g : metrics) s += g.det();
    return s;
  }
};

}  // namespace equipot
