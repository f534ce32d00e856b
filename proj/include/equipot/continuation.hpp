#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "beta.hpp"
#include "core.hpp"
#include "energy.hpp"
#include "envelope.hpp"
#include "grid.hpp"
#include "problem.hpp"

namespace equipot {

class LadderStalled : public Error {
 public:
  using Error::Error;
};

class BoundViolated : public Error {
 public:
  using Error::Error;
};

/** Geometric schedule for the inverse temperature. */
struct BetaSchedule {
  double beta0 = 1.0;
  double growth = 4.0;
  double beta_max = 1048576.0;  // 4^10
  double ladder_tol = 1e-5;

  void check() const {
    if (!(beta0 > 0.0)) throw InvalidArgument("schedule: beta0 must be positive");
    if (!(growth > 1.0)) throw InvalidArgument("schedule: growth must exceed 1");
    if (!(beta_max >= beta0)) throw InvalidArgument("schedule: beta_max below beta0");
    if (!(ladder_tol > 0.0)) throw InvalidArgument("schedule: ladder_tol must be positive");
  }
};

/** Everything recorded at one ladder rung, for the boundedness monitors and
 *  the convergence diagnostics. */
struct Rung {
  double beta = 0.0;
  double residual = 0.0;
  double sup_gap = 0.0;    // sup(sum phi_j - weight)
  double sum_bound = 0.0;  // beta * sup_gap
  std::vector<double> energies;
  std::vector<double> laplacian_sups;
  double f_value = 0.0;       // f_phi at this rung's potentials
  double f_beta_value = 0.0;  // relaxed functional at this rung
  double increment = 0.0;     // max_j sup|phi_j - previous rung phi_j|
  int newton_iters = 0;
  int cg_iters = 0;
};

struct ExtremalResult {
  std::vector<Field> potentials;
  Measure mu_eq;  // probability-normalized measure of the first form
  double beta_final = 0.0;
  std::vector<Rung> ladder;
  double max_violation = 0.0;     // max(0, sup(sum phi_j - weight))
  double support_residual = 0.0;  // integral of (weight - sum phi_j) d mu_eq
  double measure_spread = 0.0;    // max pairwise sup|MA_j/V_j - MA_k/V_k|
};

/**
 * Drives beta up the schedule with warm starts and returns the last rung's
 * potentials plus the equilibrium measure. Stops early once consecutive
 * rungs agree within ladder_tol in sup norm. The per-rung solve tolerance is
 * relaxed to beta * 1e-14 at large beta: the residual is recomputed through
 * exp(beta g), so one ulp of g costs beta * V ulps of residual and a fixed
 * tolerance below that floor would be unattainable, not strict.
 */
using RungHook = std::function<void(const Rung&, const std::vector<Field>&)>;

inline ExtremalResult solve_extremal(const ProblemData& data, const BetaSchedule& schedule = {},
                                     double tol = 1e-10,
                                     const std::optional<std::vector<Field>>& init = std::nullopt,
                                     const RungHook& on_rung = {}) {
  schedule.check();
  if (data.grid.ndim != 1) throw InvalidArgument("solve_extremal: complex-1D only");
  const int m = data.m();

  ExtremalResult out;
  std::optional<std::vector<Field>> warm = init;
  bool have_prev = false;
  std::vector<Field> prev;
  int consecutive_failures = 0;

  for (double beta = schedule.beta0; beta <= schedule.beta_max * (1.0 + 1e-12);
       beta *= schedule.growth) {
    const double tol_k = std::max(tol, beta * 1e-14);
    BetaSolution sol;
    try {
      sol = solve_beta(data, beta, warm, tol_k);
    } catch (const NoConvergence& e) {
      if (++consecutive_failures >= 2)
        throw LadderStalled("ladder stalled at beta = " + fmt_g(beta) + ": " +
                            e.what() + (out.ladder.empty()
                                            ? std::string()
                                            : "; best rung beta = " +
                                                  fmt_g(out.ladder.back().beta) +
                                                  ", residual = " +
                                                  fmt_g(out.ladder.back().residual)));
      continue;  // retry at the next rung from the same warm start
    }
    consecutive_failures = 0;

    Rung r;
    r.beta = beta;
    r.residual = sol.residual_sup;
    r.sup_gap = sol.sup_gap;
    r.sum_bound = beta * sol.sup_gap;
    r.newton_iters = sol.newton_iters;
    r.cg_iters = sol.cg_iters;
    for (int j = 0; j < m; ++j) {
      r.energies.push_back(energy(data.forms[j], sol.potentials[j]));
      r.laplacian_sups.push_back(sup_abs(laplacian(sol.potentials[j])));
    }
    r.f_value = f_phi(sol.potentials, data);
    r.f_beta_value = f_phi_beta(sol.potentials, data, beta);
    if (have_prev) {
      double inc = 0.0;
      for (int j = 0; j < m; ++j) inc = std::max(inc, sup_abs_diff(sol.potentials[j], prev[j]));
      r.increment = inc;
    }
    out.ladder.push_back(r);
    out.beta_final = beta;
    if (on_rung) on_rung(r, sol.potentials);
    prev = sol.potentials;
    warm = std::move(sol.potentials);
    if (have_prev && out.ladder.back().increment <= schedule.ladder_tol) break;
    have_prev = true;
  }
  if (out.ladder.empty())
    throw LadderStalled("ladder produced no converged rung");

  out.potentials = std::move(prev);

  // equilibrium measure from the first form, cross-checked against every j
  std::vector<Measure> mus;
  mus.reserve(m);
  for (int j = 0; j < m; ++j) mus.push_back(ma_measure(data.forms[j], out.potentials[j]));
  double spread = 0.0;
  for (int j = 0; j < m; ++j)
    for (int k = j + 1; k < m; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < mus[j].density.v.size(); ++i)
        s = std::max(s, std::abs(mus[j].density.v[i] / data.forms[j].mass -
                                 mus[k].density.v[i] / data.forms[k].mass));
      spread = std::max(spread, s);
    }
  out.measure_spread = spread;
  if (spread > 10.0 * schedule.ladder_tol)
    throw Error("solve_extremal: normalized measures disagree across forms, spread = " +
                fmt_g(spread));

  Field mu_density = mus[0].density;
  mu_density *= 1.0 / data.forms[0].mass;
  out.mu_eq = make_measure(std::move(mu_density));

  Field gap = out.potentials[0];
  for (int j = 1; j < m; ++j) gap += out.potentials[j];
  gap -= data.weight;
  out.max_violation = std::max(0.0, sup(gap));
  gap *= -1.0;
  out.support_residual = pairing(gap, out.mu_eq);
  return out;
}

/** The three defining residuals, recomputed from raw fields. */
struct ConditionsReport {
  double measure_equality = 0.0;  // max pairwise sup|MA_j/V_j - MA_k/V_k|
  double admissibility = 0.0;     // max(0, sup(sum phi_j - weight))
  double support = 0.0;           // integral (weight - sum phi_j) d mu_eq

  bool pass(double tol) const {
    return measure_equality <= tol && admissibility <= tol && support <= tol;
  }
};

inline ConditionsReport check_conditions(const ExtremalResult& result, const ProblemData& data) {
  const int m = data.m();
  if (static_cast<int>(result.potentials.size()) != m)
    throw InvalidArgument("check_conditions: potential count != m");
  std::vector<Measure> mus;
  for (int j = 0; j < m; ++j) mus.push_back(ma_measure(data.forms[j], result.potentials[j]));

  ConditionsReport rep;
  for (int j = 0; j < m; ++j)
    for (int k = j + 1; k < m; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < mus[j].density.v.size(); ++i)
        s = std::max(s, std::abs(mus[j].density.v[i] / data.forms[j].mass -
                                 mus[k].density.v[i] / data.forms[k].mass));
      rep.measure_equality = std::max(rep.measure_equality, s);
    }

  Field gap = result.potentials[0];
  for (int j = 1; j < m; ++j) gap += result.potentials[j];
  gap -= data.weight;
  rep.admissibility = std::max(0.0, sup(gap));

  Field mu = mus[0].density;
  mu *= 1.0 / data.forms[0].mass;
  gap *= -1.0;
  rep.support = dot(gap, mu) * data.grid.cell_volume();
  return rep;
}

/** Bounded-sequence check on beta * sup_gap along the ladder: the cap is
 *  twice the max over the first three rungs, so "bounded by some constant"
 *  becomes falsifiable without inventing the constant. */
struct SumBoundReport {
  std::vector<double> series;
  double cap = 0.0;
  double max_value = 0.0;
};

inline SumBoundReport sum_bound_monitor(const ExtremalResult& result) {
  if (result.ladder.empty()) throw InvalidArgument("sum_bound_monitor: empty ladder");
  SumBoundReport rep;
  for (const Rung& r : result.ladder) rep.series.push_back(r.sum_bound);
  double head = 0.0;
  const std::size_t lead = std::min<std::size_t>(3, rep.series.size());
  for (std::size_t i = 0; i < lead; ++i) head = std::max(head, rep.series[i]);
  rep.cap = 2.0 * head;
  for (const double x : rep.series) rep.max_value = std::max(rep.max_value, x);
  if (rep.max_value > rep.cap)
    throw BoundViolated("sum bound series reaches " + fmt_g(rep.max_value) +
                        " above cap " + fmt_g(rep.cap) +
                        " (solver failure, or the summed-form envelope density is unbounded)");
  return rep;
}

namespace detail {

/** Cap for a series that should stay bounded: twice its max over the early
 *  rungs. Early means the first half of the ladder but at least three rungs;
 *  the Laplacian sup keeps growing through mid-ladder before it saturates,
 *  so a first-three cap would misread saturation as growth. */
inline double early_rung_cap(const std::vector<double>& series) {
  const std::size_t lead =
      std::max<std::size_t>(3, (series.size() + 1) / 2);
  double head = 0.0;
  for (std::size_t i = 0; i < std::min(lead, series.size()); ++i)
    head = std::max(head, series[i]);
  return 2.0 * head;
}

}  // namespace detail

/** Regularity observables: envelope density of the summed form, equilibrium
 *  density, derivative sups, ladder increments. The Laplacian series check
 *  only applies to smooth weights (spectral sups of a non-smooth weight's
 *  potentials are discretization artifacts). */
struct RegularityReport {
  double envelope_density_sup = 0.0;
  double mu_density_sup = 0.0;
  std::vector<double> gradient_sups;
  std::vector<double> laplacian_sups;
  std::vector<double> increments;
  std::vector<double> lap_series;  // per rung: max_j sup|lap(phi_j)|
  double lap_series_cap = 0.0;
  double lap_series_max = 0.0;
  bool lap_series_checked = false;
};

inline RegularityReport regularity_report(const ProblemData& data, const ExtremalResult& result,
                                          double envelope_tol = 1e-10) {
  RegularityReport rep;
  const EnvelopeSolution env = sum_form_envelope(data, envelope_tol);
  rep.envelope_density_sup = sup(env.ma5);
  rep.mu_density_sup = sup(result.mu_eq.density);
  if (!std::isfinite(rep.envelope_density_sup) || !std::isfinite(rep.mu_density_sup))
    throw Error("regularity_report: non-finite density sup");
  for (const Field& p : result.potentials) {
    rep.gradient_sups.push_back(gradient_sup(p));
    rep.laplacian_sups.push_back(sup_abs(laplacian(p)));
  }
  for (const Rung& r : result.ladder) {
    rep.increments.push_back(r.increment);
    double lmax = 0.0;
    for (const double l : r.laplacian_sups) lmax = std::max(lmax, l);
    rep.lap_series.push_back(lmax);
  }
  if (data.smooth_weight && !rep.lap_series.empty()) {
    rep.lap_series_cap = detail::early_rung_cap(rep.lap_series);
    for (const double x : rep.lap_series) rep.lap_series_max = std::max(rep.lap_series_max, x);
    rep.lap_series_checked = true;
    if (rep.lap_series_max > rep.lap_series_cap)
      throw BoundViolated("laplacian sup series reaches " + fmt_g(rep.lap_series_max) +
                          " above cap " + fmt_g(rep.lap_series_cap));
  }
  return rep;
}

}  // namespace equipot
