#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "continuation.hpp"
#include "core.hpp"
#include "energy.hpp"
#include "grid.hpp"
#include "problem.hpp"
#include "random.hpp"

namespace equipot {

/** Value of the extremal functional: f_phi at the ladder maximizer. */
inline double big_F(const ProblemData& data, const BetaSchedule& schedule = {},
                    double tol = 1e-10,
                    EnergyPrefactor pref = EnergyPrefactor::standard) {
  const ExtremalResult r = solve_extremal(data, schedule, tol);
  return f_phi(r.potentials, data, pref);
}

inline ProblemData with_weight(const ProblemData& data, Field w) {
  return ProblemData(data.grid, data.forms, std::move(w), data.smooth_weight);
}

/**
 * Directional-derivative check: central differences of the extremal value
 * along v against the pairing of v with the equilibrium measure. The
 * admissible gap is K t + floor with K fitted from the two largest steps;
 * the fit separates the O(t) discretization error from a genuine kink,
 * which no linear-in-t envelope through the origin could hide.
 */
struct DerivativeReport {
  std::vector<double> steps;
  std::vector<double> slopes;
  std::vector<double> gaps;  // |slope - pairing_value| per step
  double pairing_value = 0.0;
  double fitted_k = 0.0;
  double floor = 0.0;
  double extrapolated_error = 0.0;  // gap at the smallest step
  bool pass = false;
};

inline DerivativeReport differentiability_test(const ProblemData& data, const Field& v,
                                               const std::vector<double>& steps,
                                               const BetaSchedule& schedule = {},
                                               double tol = 1e-10) {
  if (steps.size() < 2) throw InvalidArgument("differentiability_test: need >= 2 steps");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i] > 0.0) || !(steps[i] <= 0.1))
      throw InvalidArgument("differentiability_test: steps must lie in (0, 0.1]");
    if (i > 0 && !(steps[i] < steps[i - 1]))
      throw InvalidArgument("differentiability_test: steps must strictly decrease");
  }
  check_same_grid(v, data.weight, "differentiability_test");

  DerivativeReport rep;
  rep.steps = steps;
  rep.floor = 10.0 * schedule.ladder_tol;

  const ExtremalResult base = solve_extremal(data, schedule, tol);
  rep.pairing_value = pairing(v, base.mu_eq);

  for (const double t : steps) {
    Field wp = data.weight;
    add_scaled(wp, t, v);
    Field wm = data.weight;
    add_scaled(wm, -t, v);
    const double fp = big_F(with_weight(data, std::move(wp)), schedule, tol);
    const double fm = big_F(with_weight(data, std::move(wm)), schedule, tol);
    const double slope = (fp - fm) / (2.0 * t);
    if (!std::isfinite(slope)) throw Error("differentiability_test: non-finite slope");
    rep.slopes.push_back(slope);
    rep.gaps.push_back(std::abs(slope - rep.pairing_value));
  }
  for (int i = 0; i < 2; ++i)
    rep.fitted_k = std::max(rep.fitted_k, std::max(0.0, rep.gaps[i] - rep.floor) / steps[i]);
  rep.pass = true;
  for (std::size_t i = 0; i < steps.size(); ++i)
    if (rep.gaps[i] > rep.fitted_k * steps[i] + rep.floor) rep.pass = false;
  rep.extrapolated_error = rep.gaps.back();
  return rep;
}

/** Midpoint-concavity samples of the extremal value between two weights. */
struct ConcavityReport {
  std::vector<double> ts;
  std::vector<double> values;    // big_F at the blended weight
  std::vector<double> chords;    // linear interpolation of the endpoints
  double worst_margin = 0.0;     // min over t of value - chord
  bool pass = false;
};

inline ConcavityReport concavity_test(const ProblemData& data, const Field& weight2,
                                      int samples, const BetaSchedule& schedule = {},
                                      double tol = 1e-10, double slack = 1e-4) {
  if (samples < 1) throw InvalidArgument("concavity_test: samples must be >= 1");
  check_same_grid(weight2, data.weight, "concavity_test");
  const double f0 = big_F(data, schedule, tol);
  const double f1 = big_F(with_weight(data, weight2), schedule, tol);

  ConcavityReport rep;
  rep.worst_margin = 1e300;
  for (int i = 1; i <= samples; ++i) {
    const double t = static_cast<double>(i) / (samples + 1);
    Field blend = data.weight;
    blend *= 1.0 - t;
    add_scaled(blend, t, weight2);
    const double ft = big_F(with_weight(data, std::move(blend)), schedule, tol);
    rep.ts.push_back(t);
    rep.values.push_back(ft);
    rep.chords.push_back((1.0 - t) * f0 + t * f1);
    rep.worst_margin = std::min(rep.worst_margin, ft - rep.chords.back());
  }
  rep.pass = rep.worst_margin >= -slack;
  return rep;
}

/** Multi-start agreement of the extremal potentials. */
struct UniquenessReport {
  int starts = 0;
  double max_potential_spread = 0.0;  // max over pairs and j of sup|phi_j - phi_j'|
  double max_sum_spread = 0.0;        // max over pairs of sup|sum phi - sum phi'|
  std::uint64_t seed = 0;
};

namespace detail {

inline UniquenessReport spread_of(const std::vector<std::vector<Field>>& runs,
                                  std::uint64_t seed) {
  UniquenessReport rep;
  rep.starts = static_cast<int>(runs.size());
  rep.seed = seed;
  const int m = static_cast<int>(runs[0].size());
  std::vector<Field> sums;
  for (const auto& pots : runs) {
    Field s = pots[0];
    for (int j = 1; j < m; ++j) s += pots[j];
    sums.push_back(std::move(s));
  }
  for (std::size_t a = 0; a < runs.size(); ++a)
    for (std::size_t b = a + 1; b < runs.size(); ++b) {
      for (int j = 0; j < m; ++j)
        rep.max_potential_spread =
            std::max(rep.max_potential_spread, sup_abs_diff(runs[a][j], runs[b][j]));
      rep.max_sum_spread = std::max(rep.max_sum_spread, sup_abs_diff(sums[a], sums[b]));
    }
  return rep;
}

inline std::vector<Field> random_starts(const ProblemData& data, std::uint64_t seed, int run) {
  const int kmax = std::max(1, data.grid.n / 8);
  std::vector<Field> init;
  for (int j = 0; j < data.m(); ++j)
    init.push_back(
        random_band_limited(data.grid, seed + 7919ull * run + j, kmax, 0.5));
  return init;
}

}  // namespace detail

/** Ladder solves from n_starts random initializations; the potentials must
 *  agree after normalization, and so must their sums. */
inline UniquenessReport uniqueness_test(const ProblemData& data, int n_starts,
                                        const BetaSchedule& schedule = {}, double tol = 1e-10,
                                        std::uint64_t seed = 20260816) {
  if (n_starts < 2) throw InvalidArgument("uniqueness_test: need >= 2 starts");
  std::vector<std::vector<Field>> runs;
  for (int r = 0; r < n_starts; ++r) {
    const ExtremalResult res =
        solve_extremal(data, schedule, tol, detail::random_starts(data, seed, r));
    runs.push_back(res.potentials);
  }
  return detail::spread_of(runs, seed);
}

/** Same check at one fixed beta (solve_beta rather than the ladder). */
inline UniquenessReport uniqueness_fixed_beta(const ProblemData& data, double beta,
                                              int n_starts, double tol = 1e-10,
                                              std::uint64_t seed = 20260816) {
  if (n_starts < 2) throw InvalidArgument("uniqueness_fixed_beta: need >= 2 starts");
  std::vector<std::vector<Field>> runs;
  for (int r = 0; r < n_starts; ++r) {
    const BetaSolution sol =
        solve_beta(data, beta, detail::random_starts(data, seed, r), tol);
    runs.push_back(sol.potentials);
  }
  return detail::spread_of(runs, seed);
}

}  // namespace equipot
