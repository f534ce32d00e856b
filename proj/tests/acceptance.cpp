// End-to-end acceptance gate: ten numbered criteria, one line each.
// Exits nonzero if any line reads FAIL. Tolerances are fixed here, not
// configurable, so a regression cannot be waved through.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "equipot/equipot.hpp"

using namespace equipot;

namespace {

int g_failures = 0;

void line(int idx, bool pass, const std::string& what, const std::string& detail) {
  if (!pass) ++g_failures;
  std::printf("%s  criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", idx, what.c_str(),
              detail.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string g3(double x) { return fmt_g(x); }

ProblemData envelope_preset() {
  const Grid g(1, 128);
  return ProblemData(g, {make_form(Field(g, 1.0))}, cos_mode(g, {1, 0}, 0.5));
}

ProblemData mixed_preset() {
  const Grid g(1, 64);
  return ProblemData(g,
                     {make_form(Field(g, 1.0)),
                      make_form(form_from_potential(1.0, cos_mode(g, {0, 1}, 0.002)).density)},
                     cos_mode(g, {1, 0}, 0.3));
}

}  // namespace

int main() {
  std::vector<ExtremalResult> smooth_runs;   // for the bound monitors
  std::vector<ProblemData> smooth_data;
  std::vector<std::string> smooth_names;

  // 1. trivial exactness at m = 1, 2, 3
  {
    constexpr double tol = 1e-10;
    for (int m : {1, 2, 3}) {
      const auto t0 = std::chrono::steady_clock::now();
      ProblemData data = trivial_problem(Grid(1, 64), m);
      ExtremalResult res = solve_extremal(data);
      const double elapsed = seconds_since(t0);
      double worst = res.max_violation;
      worst = std::max(worst, std::abs(res.support_residual));
      worst = std::max(worst, res.measure_spread);
      for (const Field& p : res.potentials) worst = std::max(worst, sup_abs(p));
      worst = std::max(worst, sup_abs_diff(res.mu_eq.density, Field(data.grid, 1.0)));
      for (const Rung& r : res.ladder) worst = std::max(worst, r.residual);
      line(1, worst <= tol && elapsed < 1.0,
           "flat data solves to zero at m = " + std::to_string(m),
           "worst residual " + g3(worst) + ", " + g3(elapsed) + " s");
      smooth_runs.push_back(std::move(res));
      smooth_data.push_back(std::move(data));
      smooth_names.push_back("trivial m=" + std::to_string(m));
    }
  }

  // 2. single-form ladder against the obstacle projection at N = 128
  ProblemData env_data = envelope_preset();
  ExtremalResult env_run;
  {
    constexpr double tol = 5e-3;
    const auto t0 = std::chrono::steady_clock::now();
    env_run = solve_extremal(env_data);
    EnvelopeSolution env = project(env_data.forms[0], env_data.weight, 1e-10);
    const double elapsed = seconds_since(t0);
    const double sup_err = sup_abs_diff(env_run.potentials[0], env.u);
    const double val_err =
        std::abs(env_run.ladder.back().f_value - envelope_energy(env_data.forms[0], env));
    line(2, sup_err <= tol && val_err <= tol && elapsed < 30.0,
         "half-cosine weight matches the projection oracle",
         "sup " + g3(sup_err) + ", value " + g3(val_err) + ", " + g3(elapsed) + " s");
    smooth_runs.push_back(env_run);
    smooth_data.push_back(env_data);
    smooth_names.push_back("half-cosine m=1");
  }

  // 3. equilibrium conditions on the two-form preset
  ProblemData mix_data = mixed_preset();
  ExtremalResult mix_run;
  {
    constexpr double tol = 1e-3;
    const auto t0 = std::chrono::steady_clock::now();
    mix_run = solve_extremal(mix_data);
    ConditionsReport rep = check_conditions(mix_run, mix_data);
    const double elapsed = seconds_since(t0);
    line(3, rep.pass(tol) && std::abs(rep.support) <= tol && elapsed < 60.0,
         "two-form equilibrium conditions hold",
         "measures " + g3(rep.measure_equality) + ", admissible " + g3(rep.admissibility) +
             ", support " + g3(rep.support) + ", " + g3(elapsed) + " s");
    smooth_runs.push_back(mix_run);
    smooth_data.push_back(mix_data);
    smooth_names.push_back("mixed m=2");
  }

  // 4. uniqueness: ladder multi-start and fixed-beta multi-start
  {
    UniquenessReport ladder = uniqueness_test(mix_data, 5);
    const bool ladder_ok = ladder.max_potential_spread <= 1e-4 && ladder.max_sum_spread <= 1e-4;
    constexpr double fixed_tol = 1e-10;
    UniquenessReport fixed = uniqueness_fixed_beta(mix_data, 100.0, 5, fixed_tol);
    const bool fixed_ok = fixed.max_potential_spread <= 100.0 * fixed_tol;
    line(4, ladder_ok && fixed_ok, "independent starts agree",
         "ladder spread " + g3(ladder.max_potential_spread) + ", fixed-beta spread " +
             g3(fixed.max_potential_spread));
  }

  // 5. beta-scaled gap bounded by twice its early max, every smooth preset
  {
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < smooth_runs.size(); ++i) {
      try {
        SumBoundReport rep = sum_bound_monitor(smooth_runs[i]);
        if (i + 1 == smooth_runs.size())
          detail = "worst " + g3(rep.max_value) + " vs cap " + g3(rep.cap) + " on " +
                   smooth_names[i];
      } catch (const BoundViolated& e) {
        ok = false;
        detail = smooth_names[i] + ": " + e.what();
      }
    }
    line(5, ok, "sum bound stays under twice its early-rung max", detail);
  }

  // 6. Laplacian sup series bounded by twice its early max on smooth presets
  {
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < smooth_runs.size(); ++i) {
      try {
        RegularityReport rep = regularity_report(smooth_data[i], smooth_runs[i]);
        if (!rep.lap_series_checked) {
          ok = false;
          detail = smooth_names[i] + ": series not checked";
        } else if (i + 1 == smooth_runs.size()) {
          detail = "worst " + g3(rep.lap_series_max) + " vs cap " + g3(rep.lap_series_cap) +
                   " on " + smooth_names[i];
        }
      } catch (const BoundViolated& e) {
        ok = false;
        detail = smooth_names[i] + ": " + e.what();
      }
    }
    line(6, ok, "Laplacian sups stay under twice their early-rung max", detail);
  }

  // 7. directional derivative: exact unit slope, then a cosine direction
  {
    const std::vector<double> steps{0.04, 0.02, 0.01};
    DerivativeReport ones = differentiability_test(mix_data, Field(mix_data.grid, 1.0), steps);
    double ones_err = std::abs(ones.pairing_value - 1.0);
    for (double s : ones.slopes) ones_err = std::max(ones_err, std::abs(s - 1.0));

    DerivativeReport cosd =
        differentiability_test(env_data, cos_mode(env_data.grid, {1, 0}, 1.0), steps);
    double worst_gap = 0.0;
    for (double gp : cosd.gaps) worst_gap = std::max(worst_gap, gp);
    line(7, ones_err <= 1e-10 && cosd.pass,
         "extremal value is differentiable along test directions",
         "unit-slope error " + g3(ones_err) + ", cosine pairing " + g3(cosd.pairing_value) +
             ", worst gap " + g3(worst_gap));
  }

  // 8. concavity between two cosine weights
  {
    const Grid g(1, 64);
    ProblemData data(g, {make_form(Field(g, 1.0))}, cos_mode(g, {1, 0}, 0.3));
    ConcavityReport rep = concavity_test(data, cos_mode(g, {0, 1}, 0.3), 3);
    line(8, rep.pass && rep.worst_margin >= -1e-4, "extremal value is concave in the weight",
         "worst margin " + g3(rep.worst_margin));
  }

  // 9. energy derivative by central differences, and exact measure masses
  {
    const Grid g(1, 64);
    KahlerForm theta = make_form(Field(g, 1.0) + cos_mode(g, {0, 1}, 0.25));
    Field phi = cos_mode(g, {1, 0}, 0.004);
    // Small amplitude keeps phi +- t*v admissible (the {1,1} mode has a large Laplacian).
    Field v = cos_mode(g, {1, 1}, 1e-3);
    const double paired = pairing(v, ma_measure(theta, phi));
    double worst_slope = 0.0;
    for (double t : {0.1, 0.01}) {
      Field up = phi, dn = phi;
      add_scaled(up, t, v);
      add_scaled(dn, -t, v);
      const double slope = (energy(theta, up) - energy(theta, dn)) / (2.0 * t);
      worst_slope = std::max(worst_slope, std::abs(slope - paired));
    }
    double worst_mass = 0.0;
    for (int s = 0; s < 20; ++s) {
      Field r = random_band_limited(g, 5000 + s, 8, 1.0);
      r *= 0.4 * inf(theta.density) / sup_abs(laplacian(r));
      Measure mu = ma_measure(theta, r);
      worst_mass = std::max(worst_mass, std::abs(mu.mass - theta.mass) / theta.mass);
    }
    line(9, worst_slope <= 1e-12 && worst_mass <= 1e-14,
         "energy slope equals the measure pairing and masses are exact",
         "slope gap " + g3(worst_slope) + ", relative mass gap " + g3(worst_mass));
  }

  // 10. refinement: the ladder value approaches the projection energy
  {
    double prev = -1.0;
    bool decreasing = true;
    std::string detail;
    for (int n : {32, 64, 128}) {
      const Grid g(1, n);
      ProblemData data(g, {make_form(Field(g, 1.0))}, cos_mode(g, {1, 0}, 0.5));
      ExtremalResult res =
          (n == 128) ? env_run : solve_extremal(data);
      EnvelopeSolution env = project(data.forms[0], data.weight, 1e-10);
      const double val_err =
          std::abs(res.ladder.back().f_value - envelope_energy(data.forms[0], env));
      const double sup_err = sup_abs_diff(res.potentials[0], env.u);
      if (prev >= 0.0 && val_err >= prev) decreasing = false;
      prev = val_err;
      detail += (detail.empty() ? "" : "; ") + std::string("N=") + std::to_string(n) +
                " value " + g3(val_err) + " sup " + g3(sup_err);
    }
    line(10, decreasing, "value error decreases under refinement", detail);
  }

  if (g_failures) std::printf("%d criterion(s) failed\n", g_failures);
  else std::printf("all criteria passed\n");
  return g_failures == 0 ? 0 : 1;
}
