#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "energy.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "problem.hpp"
#include "random.hpp"

namespace equipot {

class PositivityLoss : public Error {
 public:
  using Error::Error;
};

/**
 * Solution of the coupled system at one inverse temperature:
 *   (rho_j + lap(phi_j)) / V_j = exp(beta (sum_k phi_k - weight)),
 *   sup(phi_j) = 0 for j >= 2.
 * residual_sup is recomputed from the stored potentials, not from solver
 * bookkeeping. sup_gap = sup(sum phi_k - weight) feeds the boundedness
 * monitors. exponent_clamped records whether the +40 exponent guard fired at
 * the accepted iterate (a solution is only returned when it did not).
 */
struct BetaSolution {
  double beta = 0.0;
  std::vector<Field> potentials;
  double residual_sup = 0.0;
  int newton_iters = 0;
  int cg_iters = 0;
  bool exponent_clamped = false;
  double sup_gap = 0.0;
};

namespace detail {

/**
 * Preconditioned CG for (-lap + w) x = b with w > 0 pointwise, preconditioned
 * by the constant-coefficient inverse (-lap + mean(w))^-1 applied spectrally.
 * The operator is positive definite (no kernel), so plain CG applies; iters
 * is capped, making outer Newton inexact rather than failing outright when w
 * has high contrast at large beta.
 */
inline Field pcg_helmholtz(const Field& w, const Field& b, double tol_rel, int max_iter,
                           int& iters) {
  const int axes = b.grid.axes();
  const double wbar = integrate(w);  // unit volume: integral = mean
  auto precond = [&](const Field& r) {
    return fft::apply_symbol(r, [axes, wbar](const int* k) {
      double ksq = 0.0;
      for (int a = 0; a < axes; ++a) ksq += static_cast<double>(k[a]) * k[a];
      return 1.0 / (four_pi_sq * ksq + wbar);
    });
  };
  auto apply_a = [&](const Field& x) {
    Field y = laplacian(x);
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] = w.v[i] * x.v[i] - y.v[i];
    return y;
  };

  Field x(b.grid, 0.0);
  Field r = b;
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) {
    iters = 0;
    return x;
  }
  Field z = precond(r);
  Field p = z;
  double rz = dot(r, z);
  int it = 0;
  while (it < max_iter) {
    const Field ap = apply_a(p);
    const double alpha = rz / dot(p, ap);
    add_scaled(x, alpha, p);
    add_scaled(r, -alpha, ap);
    ++it;
    if (std::sqrt(dot(r, r)) <= tol_rel * bnorm) break;
    z = precond(r);
    const double rz_new = dot(r, z);
    const double beta_cg = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = z.v[i] + beta_cg * p.v[i];
  }
  iters = it;
  return x;
}

struct GapSolve {
  Field g;
  double res_sup = 0.0;  // sup of the scalar-equation residual
  int newton = 0;
  int cg = 0;
  bool clamped = false;
};

/**
 * Damped Newton for the scalar reduction lap(g) + a = lambda exp(beta g),
 * where g = sum phi_j - weight, a = sum rho_j + lap(weight), lambda = sum V_j.
 * All m coupled equations share this right-hand side, so solving for g and
 * recovering each phi_j linearly is exact, not an approximation.
 */
inline GapSolve solve_gap(const Field& a, double lambda, double beta, Field g0, double tol,
                          int max_newton) {
  constexpr double cg_tol = 1e-12;
  constexpr int cg_cap = 300;
  GapSolve out;
  Field g = std::move(g0);

  // keep the initial exponent well inside the clamp so Newton sees true
  // curvature from the first step (wild inits otherwise stall on the clamp)
  const double g_cap = 15.0 / beta;
  for (double& x : g.v) x = std::min(x, g_cap);

  bool clamped = false;
  Field e = exp_clamped(beta * Field(g), clamped);
  auto residual = [&](const Field& gg, const Field& lap_gg, const Field& ee) {
    Field f = lap_gg;
    f += a;
    add_scaled(f, -lambda, ee);
    return f;
  };
  Field lap_g = laplacian(g);
  Field f = residual(g, lap_g, e);
  double res = sup_abs(f);

  const double target = 0.5 * tol;
  int polish_left = 2;
  while (out.newton < max_newton) {
    if (res <= target) {
      if (polish_left == 0 || res <= 0.05 * tol) break;
      --polish_left;
    }
    Field w(g.grid);
    for (std::size_t i = 0; i < w.v.size(); ++i) w.v[i] = lambda * beta * e.v[i];
    int cg_it = 0;
    Field delta = pcg_helmholtz(w, f, cg_tol, cg_cap, cg_it);
    out.cg += cg_it;

    const Field lap_delta = laplacian(delta);
    double step = 1.0;
    bool accepted = false;
    for (int half = 0; half < 30; ++half) {
      Field g_try = g;
      add_scaled(g_try, step, delta);
      bool cl = false;
      Field e_try = exp_clamped(beta * Field(g_try), cl);
      Field lap_try = lap_g;
      add_scaled(lap_try, step, lap_delta);
      Field f_try = residual(g_try, lap_try, e_try);
      const double res_try = sup_abs(f_try);
      if (res_try < res) {
        g = std::move(g_try);
        e = std::move(e_try);
        f = std::move(f_try);
        res = res_try;
        clamped = cl;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++out.newton;
    if (!accepted)
      throw NoConvergence("solve_gap: backtracking stalled at residual " + fmt_g(res),
                          out.newton, res);
    lap_g = laplacian(g);  // fresh, so backtracking roundoff cannot accumulate
    f = residual(g, lap_g, e);
    res = sup_abs(f);
    if (res <= target && polish_left == 0) break;
  }
  if (res > tol)
    throw NoConvergence("solve_gap: residual " + fmt_g(res) + " above tol after " +
                            std::to_string(out.newton) + " Newton steps",
                        out.newton, res);
  if (clamped)
    throw NoConvergence("solve_gap: exponent clamp active at the final iterate", out.newton,
                        res);
  out.g = std::move(g);
  out.res_sup = res;
  out.clamped = false;
  return out;
}

}  // namespace detail

/** Recomputes max_j sup|rho_j + lap(phi_j) - V_j exp(beta (sum phi - weight))|
 *  from raw fields, independent of any solver state. */
inline double beta_residual(const ProblemData& data, const std::vector<Field>& potentials,
                            double beta) {
  Field gap = potentials[0];
  for (std::size_t j = 1; j < potentials.size(); ++j) gap += potentials[j];
  gap -= data.weight;
  bool cl = false;
  const Field e = exp_clamped(beta * std::move(gap), cl);
  double worst = 0.0;
  for (std::size_t j = 0; j < potentials.size(); ++j) {
    Field r = laplacian(potentials[j]);
    r += data.forms[j].density;
    add_scaled(r, -data.forms[j].mass, e);
    worst = std::max(worst, sup_abs(r));
  }
  return worst;
}

/**
 * Solves the coupled system at fixed beta by the scalar reduction:
 * Newton on the gap g, then linear recovery phi_j = poisson(V_j e^{beta g} -
 * rho_j), then the normalization sup(phi_j) = 0 for j >= 2 with phi_1
 * absorbing the remaining constant so that sum phi_j = weight + g exactly.
 */
inline BetaSolution solve_beta(const ProblemData& data, double beta,
                               const std::optional<std::vector<Field>>& init = std::nullopt,
                               double tol = 1e-10, int max_newton = 60) {
  if (!(beta > 0.0)) throw InvalidArgument("solve_beta: beta must be positive");
  if (data.grid.ndim != 1) throw InvalidArgument("solve_beta: complex-1D only");
  const int m = data.m();

  Field a = data.total_density();
  a += laplacian(data.weight);
  const double lambda = data.total_mass();

  Field g0(data.grid, 0.0);
  if (init) {
    if (static_cast<int>(init->size()) != m)
      throw InvalidArgument("solve_beta: init size != m");
    for (const Field& p : *init) g0 += p;
  }
  g0 -= data.weight;

  detail::GapSolve gap = detail::solve_gap(a, lambda, beta, std::move(g0), tol, max_newton);

  bool cl = false;
  const Field e = exp_clamped(beta * Field(gap.g), cl);
  BetaSolution sol;
  sol.beta = beta;
  sol.newton_iters = gap.newton;
  sol.cg_iters = gap.cg;
  sol.exponent_clamped = false;
  sol.potentials.reserve(m);
  sol.potentials.emplace_back(data.grid, 0.0);  // placeholder for phi_1
  Field sum_rest(data.grid, 0.0);
  for (int j = 1; j < m; ++j) {
    Field rhs(data.grid);
    for (std::size_t i = 0; i < rhs.v.size(); ++i)
      rhs.v[i] = data.forms[j].mass * e.v[i] - data.forms[j].density.v[i];
    // rhs mean is bounded by the equation residual; 1e-6 is pure headroom
    Field pj = poisson_solve(rhs, 1e-6);
    shift(pj, -sup(pj));
    sum_rest += pj;
    sol.potentials.push_back(std::move(pj));
  }
  Field p1 = data.weight;
  p1 += gap.g;
  p1 -= sum_rest;
  sol.potentials[0] = std::move(p1);

  sol.residual_sup = beta_residual(data, sol.potentials, beta);
  if (sol.residual_sup > tol)
    throw NoConvergence("solve_beta: recomputed residual " + fmt_g(sol.residual_sup) +
                            " above tol",
                        gap.newton, sol.residual_sup);
  Field gfin = sol.potentials[0];
  for (int j = 1; j < m; ++j) gfin += sol.potentials[j];
  gfin -= data.weight;
  sol.sup_gap = sup(gfin);
  return sol;
}

/** Optimality spot check: random admissible perturbations of the solution
 *  must not increase the relaxed functional. */
struct MaximizerReport {
  int trials = 0;
  int violations = 0;
  double worst_gap = 0.0;        // max over trials of f(perturbed) - f(solution)
  double max_second_diff = 0.0;  // concavity along the sampled lines
  std::uint64_t seed = 0;
};

inline MaximizerReport maximizer_check(const BetaSolution& sol, const ProblemData& data,
                                       int trials, std::uint64_t seed = 20260816,
                                       EnergyPrefactor pref = EnergyPrefactor::standard) {
  MaximizerReport rep;
  rep.trials = trials;
  rep.seed = seed;
  rep.worst_gap = -1e300;
  rep.max_second_diff = -1e300;
  const double f0 = f_phi_beta(sol.potentials, data, sol.beta, pref);
  const int m = data.m();
  const int kmax = std::max(1, data.grid.n / 8);
  for (int t = 0; t < trials; ++t) {
    std::vector<Field> dirs;
    double step = 0.01;
    for (int j = 0; j < m; ++j) {
      Field v = random_band_limited(data.grid, seed + 1000003ull * t + j, kmax, 1.0);
      // keep rho_j + lap(phi_j + step v) positive: the measure density at
      // finite beta is strictly positive, use half its floor as the budget
      const Measure mu = ma_measure(data.forms[j], sol.potentials[j]);
      const double room = 0.5 * inf(mu.density) / std::max(1e-300, sup_abs(laplacian(v)));
      step = std::min(step, room);
      dirs.push_back(std::move(v));
    }
    std::vector<Field> plus = sol.potentials, minus = sol.potentials;
    for (int j = 0; j < m; ++j) {
      add_scaled(plus[j], step, dirs[j]);
      add_scaled(minus[j], -step, dirs[j]);
    }
    const double fp = f_phi_beta(plus, data, sol.beta, pref);
    const double fm = f_phi_beta(minus, data, sol.beta, pref);
    rep.worst_gap = std::max(rep.worst_gap, fp - f0);
    rep.worst_gap = std::max(rep.worst_gap, fm - f0);
    rep.max_second_diff = std::max(rep.max_second_diff, fp - 2.0 * f0 + fm);
    if (fp > f0 + 1e-10 || fm > f0 + 1e-10) ++rep.violations;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Experimental complex-2D backend.
// ---------------------------------------------------------------------------

namespace detail {

/** Inverse of the constant-coefficient linearization at the background
 *  metric, tr(cof(g) H(.)), applied spectrally with the zero mode dropped. */
inline Field solve_background_linear(const Metric2& g, const Field& rhs) {
  const int nyq = rhs.grid.n / 2;
  return fft::apply_symbol(rhs, [g, nyq](const int* k) {
    const double q1 = static_cast<double>(k[0]) * k[0] + static_cast<double>(k[1]) * k[1];
    const double q2 = static_cast<double>(k[2]) * k[2] + static_cast<double>(k[3]) * k[3];
    double sym = g.g22 * q1 + g.g11 * q2;
    const bool ny = std::abs(k[0]) == nyq || std::abs(k[1]) == nyq ||
                    std::abs(k[2]) == nyq || std::abs(k[3]) == nyq;
    if (!ny) {
      sym -= 2.0 * g.re12 * (static_cast<double>(k[0]) * k[2] + static_cast<double>(k[1]) * k[3]);
      sym -= 2.0 * g.im12 * (static_cast<double>(k[0]) * k[3] - static_cast<double>(k[1]) * k[2]);
    }
    if (sym == 0.0) return 0.0;
    return -1.0 / (four_pi_sq * sym);
  });
}

/** det(g + H(psi)) together with the worst positivity margin of the pointwise
 *  matrix (min over diagonal entries and determinant). */
inline Field det_and_margin(const Metric2& g, const HessianEntries& h, double& margin) {
  Field d(h.h11.grid);
  margin = 1e300;
  for (std::size_t i = 0; i < d.v.size(); ++i) {
    const double a11 = g.g11 + h.h11.v[i];
    const double a22 = g.g22 + h.h22.v[i];
    const double re = g.re12 + h.re12.v[i];
    const double im = g.im12 + h.im12.v[i];
    d.v[i] = a11 * a22 - re * re - im * im;
    margin = std::min(margin, std::min(std::min(a11, a22), d.v[i]));
  }
  return d;
}

/**
 * Quasi-Newton for det(g + H(psi)) = rhs with mean-zero psi: corrections come
 * from the frozen background linearization, damped so the pointwise matrix
 * stays positive definite. Adequate in the small-deformation regime this
 * backend is scoped to.
 */
inline Field solve_ma2(const Metric2& g, const Field& rhs, double tol, int max_iter) {
  Field psi(rhs.grid, 0.0);
  HessianEntries h = complex_hessian(psi);
  double margin = 0.0;
  Field det = det_and_margin(g, h, margin);
  Field f = rhs;
  f -= det;
  double res = sup_abs(f);
  for (int it = 0; it < max_iter && res > tol; ++it) {
    Field delta = solve_background_linear(g, f);
    double step = 1.0;
    bool ok = false;
    for (int half = 0; half < 30; ++half) {
      Field cand = psi;
      add_scaled(cand, step, delta);
      HessianEntries hc = complex_hessian(cand);
      double mg = 0.0;
      Field dc = det_and_margin(g, hc, mg);
      if (mg > tol_pos) {
        Field fc = rhs;
        fc -= dc;
        const double rc = sup_abs(fc);
        if (rc < res) {
          psi = std::move(cand);
          det = std::move(dc);
          f = std::move(fc);
          res = rc;
          ok = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!ok) {
      if (margin <= tol_pos)
        throw PositivityLoss("solve_ma2: cannot keep the metric positive definite");
      throw NoConvergence("solve_ma2: stalled at residual " + fmt_g(res), it, res);
    }
  }
  if (res > tol)
    throw NoConvergence("solve_ma2: residual " + fmt_g(res) + " above tol", max_iter,
                        res);
  return psi;
}

}  // namespace detail

/** Recomputed residual for the complex-2D system. */
inline double beta_residual_nd(const Problem2& data, const std::vector<Field>& potentials,
                               double beta) {
  Field gap = potentials[0];
  for (std::size_t j = 1; j < potentials.size(); ++j) gap += potentials[j];
  gap -= data.weight;
  bool cl = false;
  const Field e = exp_clamped(beta * std::move(gap), cl);
  double worst = 0.0;
  for (std::size_t j = 0; j < potentials.size(); ++j) {
    const HessianEntries h = complex_hessian(potentials[j]);
    double mg = 0.0;
    Field det = detail::det_and_margin(data.metrics[j], h, mg);
    add_scaled(det, -data.metrics[j].det(), e);
    worst = std::max(worst, sup_abs(det));
  }
  return worst;
}

/**
 * Complex-2D variant (experimental): outer fixed point on the potential sum,
 * with inner Monge-Ampere solves per form. Each outer pass renormalizes the
 * sum so the exponential right-hand sides carry exactly the form masses,
 * which is the discrete solvability condition for the inner problems.
 */
inline BetaSolution solve_beta_nd(const Problem2& data, double beta, double tol = 1e-8,
                                  int max_outer = 60) {
  if (!(beta > 0.0)) throw InvalidArgument("solve_beta_nd: beta must be positive");
  const int m = data.m();

  Field s(data.grid, 0.0);
  auto renormalize = [&](Field& ss) {
    Field gap = ss;
    gap -= data.weight;
    const double top = sup(gap);
    Field ex(gap.grid);
    for (std::size_t i = 0; i < ex.v.size(); ++i)
      ex.v[i] = std::exp(beta * (gap.v[i] - top));
    shift(ss, -(top + std::log(integrate(ex)) / beta));
  };
  renormalize(s);

  std::vector<Field> psi(m, Field(data.grid, 0.0));
  // the potential sum only settles once updates stop perturbing the shared
  // right-hand side; the mass factor covers the det-linearization gain
  const double move_tol = 0.2 * tol / (1.0 + 100.0 * data.total_mass());
  double res = 1e300;
  int outer = 0;
  bool settled = false;
  for (; outer < max_outer; ++outer) {
    Field gap = s;
    gap -= data.weight;
    bool cl = false;
    const Field e = exp_clamped(beta * std::move(gap), cl);
    if (cl) throw NoConvergence("solve_beta_nd: exponent clamp hit", outer, res);

    double worst = 0.0;
    for (int j = 0; j < m; ++j) {
      Field rhs(data.grid);
      const double vj = data.metrics[j].det();
      for (std::size_t i = 0; i < rhs.v.size(); ++i) rhs.v[i] = vj * e.v[i];
      psi[j] = detail::solve_ma2(data.metrics[j], rhs, 0.1 * tol, 80);
      const HessianEntries h = complex_hessian(psi[j]);
      double mg = 0.0;
      Field det = detail::det_and_margin(data.metrics[j], h, mg);
      det -= rhs;
      worst = std::max(worst, sup_abs(det));
    }
    Field s_new(data.grid, 0.0);
    for (int j = 0; j < m; ++j) s_new += psi[j];
    renormalize(s_new);
    const double move = sup_abs_diff(s_new, s);
    res = worst + move;
    if (worst <= 0.5 * tol && move <= move_tol) {
      settled = true;  // keep the s the inner solves targeted
      break;
    }
    s = std::move(s_new);
  }
  if (!settled)
    throw NoConvergence("solve_beta_nd: outer fixed point did not settle, residual " +
                            fmt_g(res),
                        outer, res);

  BetaSolution sol;
  sol.beta = beta;
  sol.newton_iters = outer;
  sol.potentials.resize(m, Field(data.grid, 0.0));
  Field sum_rest(data.grid, 0.0);
  for (int j = 1; j < m; ++j) {
    Field pj = psi[j];
    shift(pj, -sup(pj));
    sum_rest += pj;
    sol.potentials[j] = std::move(pj);
  }
  Field p1 = s;
  p1 -= sum_rest;
  sol.potentials[0] = std::move(p1);
  sol.residual_sup = beta_residual_nd(data, sol.potentials, beta);
  if (sol.residual_sup > tol)
    throw NoConvergence("solve_beta_nd: recomputed residual " +
                            fmt_g(sol.residual_sup) + " above tol",
                        outer, sol.residual_sup);
  Field gfin = sol.potentials[0];
  for (int j = 1; j < m; ++j) gfin += sol.potentials[j];
  gfin -= data.weight;
  sol.sup_gap = sup(gfin);
  return sol;
}

}  // namespace equipot
