#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core.hpp"
#include "energy.hpp"
#include "grid.hpp"
#include "problem.hpp"

namespace equipot {

/**
 * Envelope of an obstacle: the largest u <= phi with rho + lap5(u) >= 0.
 *
 * Everything here is built on the 5-point stencil, including the reported
 * density ma5 = rho + lap5(u) and the residual triple. The envelope has a
 * curvature kink at the free boundary, where spectral differentiation rings
 * at O(h * jump); keeping the oracle on its own stencil is what makes it an
 * independent check on the spectral solvers rather than a restatement.
 */
struct EnvelopeSolution {
  Field u;
  Field ma5;
  std::vector<std::uint8_t> contact_mask;
  struct {
    double obstacle = 0.0;
    double positivity = 0.0;
    double complementarity = 0.0;
  } residuals;
  int iterations = 0;
  double tol = 0.0;
};

namespace detail {

/** rho + 5-point Laplacian of u, h^-2 (u_E + u_W + u_N + u_S - 4 u_C). */
inline Field density5(const Field& rho, const Field& u) {
  const int n = u.grid.n;
  const double ih2 = static_cast<double>(n) * n;
  Field d(u.grid);
  for (int i = 0; i < n; ++i) {
    const int im = (i == 0 ? n - 1 : i - 1) * n;
    const int ip = (i == n - 1 ? 0 : i + 1) * n;
    const int ic = i * n;
    for (int j = 0; j < n; ++j) {
      const int jm = j == 0 ? n - 1 : j - 1;
      const int jp = j == n - 1 ? 0 : j + 1;
      d.v[ic + j] = rho.v[ic + j] +
                    ih2 * (u.v[im + j] + u.v[ip + j] + u.v[ic + jm] + u.v[ic + jp] -
                           4.0 * u.v[ic + j]);
    }
  }
  return d;
}

}  // namespace detail

/**
 * Solves the obstacle problem min(phi - u, rho + lap5 u) = 0 by projected SOR
 * with red-black sweeps (fixed order, deterministic). omega_relax = 1.5.
 *
 * Residuals are measured against the 5-point operator itself:
 *   obstacle        = max(0, sup(u - phi))
 *   positivity      = max(0, -inf(rho + lap5 u))
 *   complementarity = sup min(phi - u, rho + lap5 u)
 * Convergence requires all three <= tol.
 */
inline EnvelopeSolution project(const KahlerForm& theta, const Field& phi, double tol = 1e-10,
                                int max_iter = 400000) {
  if (phi.grid.ndim != 1) throw InvalidArgument("project: complex-1D only");
  check_same_grid(theta.density, phi, "project");
  if (!(tol > 0.0)) throw InvalidArgument("project: tol must be positive");

  const int n = phi.grid.n;
  const double h2 = 1.0 / (static_cast<double>(n) * n);
  const double omega_relax = 1.5;

  // admissible-safe start: low enough that rho + lap5(u0) - obstacle slack
  // cannot start on the wrong side of the free boundary
  Field u = phi;
  shift(u, inf(phi) - sup(phi));

  EnvelopeSolution sol;
  sol.tol = tol;

  auto measure = [&](EnvelopeSolution& s) {
    s.ma5 = detail::density5(theta.density, u);
    double ob = 0.0, pos = 0.0, comp = -1e300;
    for (std::size_t i = 0; i < u.v.size(); ++i) {
      ob = std::max(ob, u.v[i] - phi.v[i]);
      pos = std::max(pos, -s.ma5.v[i]);
      comp = std::max(comp, std::min(phi.v[i] - u.v[i], s.ma5.v[i]));
    }
    s.residuals.obstacle = std::max(0.0, ob);
    s.residuals.positivity = std::max(0.0, pos);
    s.residuals.complementarity = std::max(0.0, comp);
    return s.residuals.obstacle <= tol && s.residuals.positivity <= tol &&
           s.residuals.complementarity <= tol;
  };

  int it = 0;
  bool done = measure(sol);
  while (!done && it < max_iter) {
    // one red-black PSOR sweep: unconstrained Gauss-Seidel target for
    // rho + lap5 u = 0, over-relaxed, then projected onto u <= phi
    for (int color = 0; color < 2; ++color) {
      for (int i = 0; i < n; ++i) {
        const int im = (i == 0 ? n - 1 : i - 1) * n;
        const int ip = (i == n - 1 ? 0 : i + 1) * n;
        const int ic = i * n;
        for (int j = (i + color) & 1; j < n; j += 2) {
          const int jm = j == 0 ? n - 1 : j - 1;
          const int jp = j == n - 1 ? 0 : j + 1;
          const double gs = 0.25 * (u.v[im + j] + u.v[ip + j] + u.v[ic + jm] +
                                    u.v[ic + jp] + h2 * theta.density.v[ic + j]);
          const double cand = u.v[ic + j] + omega_relax * (gs - u.v[ic + j]);
          u.v[ic + j] = std::min(cand, phi.v[ic + j]);
        }
      }
    }
    ++it;
    if ((it & 15) == 0 || it == max_iter) done = measure(sol);
  }
  sol.iterations = it;
  if (!done) {
    measure(sol);
    throw NoConvergence(
        "project: " + std::to_string(it) + " sweeps, residuals obstacle=" +
            fmt_g(sol.residuals.obstacle) + " positivity=" +
            fmt_g(sol.residuals.positivity) + " complementarity=" +
            fmt_g(sol.residuals.complementarity),
        it,
        std::max(sol.residuals.obstacle,
                 std::max(sol.residuals.positivity, sol.residuals.complementarity)));
  }

  sol.u = std::move(u);
  sol.contact_mask.assign(sol.u.v.size(), 0);
  for (std::size_t i = 0; i < sol.u.v.size(); ++i)
    sol.contact_mask[i] = (phi.v[i] - sol.u.v[i] <= 10.0 * tol) ? 1 : 0;
  return sol;
}

/** Recomputes the contact mask at threshold kappa * tol; kappa decouples set
 *  detection from solver tolerance (the free boundary is resolved to O(h)). */
inline std::vector<std::uint8_t> contact_set(const EnvelopeSolution& sol, const Field& phi,
                                             double kappa = 10.0) {
  std::vector<std::uint8_t> mask(sol.u.v.size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = (phi.v[i] - sol.u.v[i] <= kappa * sol.tol) ? 1 : 0;
  return mask;
}

/** Envelope of the weight under the summed form (densities and masses add). */
inline EnvelopeSolution sum_form_envelope(const ProblemData& data, double tol = 1e-10,
                                          int max_iter = 400000) {
  KahlerForm total = make_form(data.total_density());
  return project(total, data.weight, tol, max_iter);
}

/**
 * Energy of the envelope against its form, evaluated with the oracle's own
 * 5-point density. The spectral form would see the free-boundary kink as a
 * negative density overshoot and reject a perfectly admissible envelope.
 */
inline double envelope_energy(const KahlerForm& theta, const EnvelopeSolution& sol,
                              EnergyPrefactor pref = EnergyPrefactor::standard) {
  Field mix = theta.density;
  mix += sol.ma5;
  const double raw = dot(sol.u, mix) * sol.u.grid.cell_volume();
  return pref == EnergyPrefactor::standard ? raw / 2.0 : raw;
}

}  // namespace equipot
