#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"
#include "grid.hpp"
#include "problem.hpp"

namespace equipot {

/** Density of a positive measure against the flat volume, with cached mass. */
struct Measure {
  Field density;
  double mass = 0.0;
};

inline Measure make_measure(Field density) {
  Measure mu;
  mu.mass = integrate(density);
  mu.density = std::move(density);
  return mu;
}

/**
 * Measure of the deformed form on a complex-1D grid: density rho + lap(phi).
 * Mass equals the form mass exactly (the Laplacian integrates to zero).
 * Throws NotAdmissible when the density dips below -tol_pos, i.e. phi is not
 * admissible for the form on this grid.
 */
inline Measure ma_measure(const KahlerForm& theta, const Field& phi) {
  if (phi.grid.ndim != 1)
    throw InvalidArgument("ma_measure: complex-1D only; use ma_measure_nd");
  check_same_grid(theta.density, phi, "ma_measure");
  Field d = laplacian(phi);
  d += theta.density;
  const double lo = inf(d);
  if (lo < -tol_pos)
    throw NotAdmissible("ma_measure: density min " + fmt_g(lo) +
                        " below -" + fmt_g(tol_pos));
  return make_measure(std::move(d));
}

/**
 * Experimental complex-2D measure: det(g + H(phi)) with H the scaled complex
 * Hessian. phi = 0 gives the constant density det(g); the pure-trace terms
 * and the det(H) term both integrate to zero spectrally, so the mass is
 * det(g) up to Nyquist content. Throws NotAdmissible if the pointwise matrix
 * leaves the positive semi-definite cone by more than tol_pos.
 */
inline Measure ma_measure_nd(const Metric2& g, const Field& phi) {
  check_metric(g);
  const HessianEntries h = complex_hessian(phi);
  Field d(phi.grid);
  double worst = 0.0;
  for (std::size_t i = 0; i < d.v.size(); ++i) {
    const double a11 = g.g11 + h.h11.v[i];
    const double a22 = g.g22 + h.h22.v[i];
    const double re = g.re12 + h.re12.v[i];
    const double im = g.im12 + h.im12.v[i];
    d.v[i] = a11 * a22 - re * re - im * im;
    worst = std::min(worst, std::min(a11, a22));
    worst = std::min(worst, d.v[i]);
  }
  if (worst < -tol_pos)
    throw NotAdmissible("ma_measure_nd: pointwise matrix indefinite, margin " +
                        fmt_g(worst));
  return make_measure(std::move(d));
}

enum class EnergyPrefactor { standard, none };

/**
 * Monge-Ampere energy of phi against the form. The standard prefactor is
 * 1/(n+1), which yields the shift rule energy(phi + c) = energy(phi) + c V
 * that every functional below relies on; `none` drops it (kept selectable
 * because the two conventions differ in the literature).
 */
inline double energy(const KahlerForm& theta, const Field& phi,
                     EnergyPrefactor pref = EnergyPrefactor::standard) {
  const int n = phi.grid.ndim;
  double raw = 0.0;
  if (n == 1) {
    const Measure mu = ma_measure(theta, phi);
    Field mix = theta.density;
    mix += mu.density;
    raw = dot(phi, mix) * phi.grid.cell_volume();
  } else {
    throw InvalidArgument("energy: complex-1D only");
  }
  return pref == EnergyPrefactor::standard ? raw / (n + 1) : raw;
}

/** Normalized energy sum minus the sup coupling term:
 *  sum_j E(theta_j, phi_j)/V_j - sup(sum_j phi_j - weight). */
inline double f_phi(const std::vector<Field>& potentials, const ProblemData& data,
                    EnergyPrefactor pref = EnergyPrefactor::standard) {
  if (static_cast<int>(potentials.size()) != data.m())
    throw InvalidArgument("f_phi: potential count != m");
  double e = 0.0;
  Field gap = potentials[0];
  e += energy(data.forms[0], potentials[0], pref) / data.forms[0].mass;
  for (std::size_t j = 1; j < potentials.size(); ++j) {
    e += energy(data.forms[j], potentials[j], pref) / data.forms[j].mass;
    gap += potentials[j];
  }
  gap -= data.weight;
  return e - sup(gap);
}

/**
 * Thermodynamic relaxation of f_phi at inverse temperature beta: the sup is
 * replaced by (1/beta) log of the exponential integral. Evaluated with the
 * exponent shifted by its sup so the integrand never overflows. Always at
 * least f_phi on the same inputs.
 */
inline double f_phi_beta(const std::vector<Field>& potentials, const ProblemData& data,
                         double beta, EnergyPrefactor pref = EnergyPrefactor::standard) {
  if (beta <= 0.0) throw InvalidArgument("f_phi_beta: beta must be positive");
  if (static_cast<int>(potentials.size()) != data.m())
    throw InvalidArgument("f_phi_beta: potential count != m");
  double e = 0.0;
  Field gap = potentials[0];
  e += energy(data.forms[0], potentials[0], pref) / data.forms[0].mass;
  for (std::size_t j = 1; j < potentials.size(); ++j) {
    e += energy(data.forms[j], potentials[j], pref) / data.forms[j].mass;
    gap += potentials[j];
  }
  gap -= data.weight;
  const double top = sup(gap);
  Field ex(gap.grid);
  for (std::size_t i = 0; i < ex.v.size(); ++i) ex.v[i] = std::exp(beta * (gap.v[i] - top));
  return e - (top + std::log(integrate(ex)) / beta);
}

/** Integral of v against the measure. */
inline double pairing(const Field& v, const Measure& mu) {
  check_same_grid(v, mu.density, "pairing");
  return dot(v, mu.density) * v.grid.cell_volume();
}

}  // namespace equipot
