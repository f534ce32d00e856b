#include <atomic>
#include <memory>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "equipot/equipot.hpp"

using namespace equipot;

namespace {

/** Summary assertions plus a sticky pass/fail bit for the exit code. */
struct Checker {
  io::Summary& s;
  bool all_pass = true;
  void check(const std::string& name, bool pass, const std::string& detail) {
    s.assertion(name, pass, detail);
    all_pass = all_pass && pass;
  }
};

std::string resolve_out_dir(const std::string& flag, const io::RunConfig& cfg) {
  if (!flag.empty()) return flag;
  if (cfg.out_dir != "out") return cfg.out_dir;
  if (const char* env = std::getenv("EQUIPOT_OUT"); env && *env) return env;
  return cfg.out_dir;
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

Field mask_to_field(const Grid& g, const std::vector<std::uint8_t>& mask) {
  Field f(g, 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i) f.v[i] = mask[i] ? 1.0 : 0.0;
  return f;
}

void dump_potentials(const std::vector<Field>& phis, const std::string& dir,
                     const std::string& stem) {
  for (std::size_t j = 0; j < phis.size(); ++j)
    io::dump_field(phis[j], join(dir, stem + "_" + std::to_string(j + 1) + ".csv"));
}

void require_flat_torus_1(const io::RunConfig& cfg, const std::string& sub) {
  if (cfg.ndim != 1)
    throw ConfigError(sub + " requires grid.ndim = 1 (grid.ndim = 2 is solve-beta only)");
}

int run_solve(const io::RunConfig& cfg, io::Summary& s, const std::string& out_dir) {
  require_flat_torus_1(cfg, "solve");
  ProblemData data = io::build_problem(cfg);

  RungHook hook;
  auto rung_idx = std::make_shared<int>(0);
  if (cfg.dump_every_rung) {
    hook = [&out_dir, rung_idx](const Rung&, const std::vector<Field>& phis) {
      char tag[32];
      std::snprintf(tag, sizeof(tag), "rung_%03d", (*rung_idx)++);
      dump_potentials(phis, out_dir, std::string(tag) + "_phi");
    };
  }
  ExtremalResult res = solve_extremal(data, cfg.schedule, cfg.solver_tol, std::nullopt, hook);

  io::ladder_table(s, res.ladder);
  s.section("result");
  s.kv("beta_final", res.beta_final);
  s.kv("rungs", static_cast<int>(res.ladder.size()));
  s.kv("f_value", res.ladder.back().f_value);
  s.kv("f_beta_value", res.ladder.back().f_beta_value);
  s.kv("residual", res.ladder.back().residual);
  s.kv("max_violation", res.max_violation);
  s.kv("support_residual", res.support_residual);
  s.kv("measure_spread", res.measure_spread);
  s.kv("mu_mass", res.mu_eq.mass);

  ConditionsReport cond = check_conditions(res, data);
  s.section("conditions");
  s.kv("measure_equality", cond.measure_equality);
  s.kv("admissibility", cond.admissibility);
  s.kv("support", cond.support);
  Checker c{s};
  c.check("equilibrium conditions within check.tol", cond.pass(cfg.check_tol),
          "tol = " + io::g17(cfg.check_tol));
  c.check("probability mass of the equilibrium measure",
          std::abs(res.mu_eq.mass - 1.0) <= 1e-8, io::g17(res.mu_eq.mass));

  if (cfg.dump_fields) {
    dump_potentials(res.potentials, out_dir, "phi");
    io::dump_field(res.mu_eq.density, join(out_dir, "mu_eq.csv"));
    io::dump_field(data.weight, join(out_dir, "weight.csv"));
  }
  return c.all_pass ? 0 : 2;
}

int run_solve_beta(const io::RunConfig& cfg, io::Summary& s, const std::string& out_dir) {
  std::vector<Field> phis;
  BetaSolution sol;
  if (cfg.ndim == 2) {
    Problem2 data = io::build_problem2(cfg);
    sol = solve_beta_nd(data, cfg.beta, cfg.solver_tol, cfg.solver_max_newton);
  } else {
    ProblemData data = io::build_problem(cfg);
    sol = solve_beta(data, cfg.beta, std::nullopt, cfg.solver_tol, cfg.solver_max_newton);
  }
  s.section("result");
  s.kv("beta", sol.beta);
  s.kv("residual", sol.residual_sup);
  s.kv("sup_gap", sol.sup_gap);
  s.kv("newton_iters", sol.newton_iters);
  s.kv("cg_iters", sol.cg_iters);
  for (std::size_t j = 0; j < sol.potentials.size(); ++j)
    s.kv("sup_abs_phi_" + std::to_string(j + 1), sup_abs(sol.potentials[j]));

  Checker c{s};
  c.check("residual within solver tol", sol.residual_sup <= cfg.solver_tol,
          io::g17(sol.residual_sup));
  bool pinned = true;
  for (std::size_t j = 1; j < sol.potentials.size(); ++j)
    pinned = pinned && std::abs(sup(sol.potentials[j])) <= 1e-12;
  c.check("later potentials pinned at sup = 0", pinned, "1e-12");

  if (cfg.dump_fields) dump_potentials(sol.potentials, out_dir, "phi");
  return c.all_pass ? 0 : 2;
}

int run_envelope(const io::RunConfig& cfg, io::Summary& s, const std::string& out_dir) {
  require_flat_torus_1(cfg, "envelope");
  ProblemData data = io::build_problem(cfg);
  EnvelopeSolution sol = sum_form_envelope(data, cfg.solver_tol);

  std::size_t contact = 0;
  for (auto b : sol.contact_mask) contact += b;
  s.section("result");
  s.kv("iterations", sol.iterations);
  s.kv("obstacle_residual", sol.residuals.obstacle);
  s.kv("positivity_residual", sol.residuals.positivity);
  s.kv("complementarity_residual", sol.residuals.complementarity);
  s.kv("measure_mass", integrate(sol.ma5));
  s.kv("contact_fraction",
       static_cast<double>(contact) / static_cast<double>(sol.contact_mask.size()));
  KahlerForm total = make_form(data.total_density());
  s.kv("energy", envelope_energy(total, sol));

  Checker c{s};
  c.check("measure mass equals the total form mass",
          std::abs(integrate(sol.ma5) - data.total_mass()) <= 1e-8,
          io::g17(integrate(sol.ma5)));

  io::dump_field(sol.u, join(out_dir, "envelope.csv"));
  io::dump_field(mask_to_field(data.grid, sol.contact_mask), join(out_dir, "contact_mask.csv"));
  if (cfg.dump_fields) io::dump_field(sol.ma5, join(out_dir, "envelope_measure.csv"));
  return c.all_pass ? 0 : 2;
}

int run_check(const io::RunConfig& cfg, io::Summary& s, const std::string& out_dir) {
  require_flat_torus_1(cfg, "check");
  ProblemData data = io::build_problem(cfg);
  ExtremalResult res = solve_extremal(data, cfg.schedule, cfg.solver_tol);
  io::ladder_table(s, res.ladder);

  ConditionsReport cond = check_conditions(res, data);
  s.section("conditions");
  s.kv("measure_equality", cond.measure_equality);
  s.kv("admissibility", cond.admissibility);
  s.kv("support", cond.support);
  Checker c{s};
  c.check("measure equality across forms", cond.measure_equality <= cfg.check_tol,
          io::g17(cond.measure_equality));
  c.check("admissibility of the potential sum", cond.admissibility <= cfg.check_tol,
          io::g17(cond.admissibility));
  c.check("equilibrium measure sits on the contact set", cond.support <= cfg.check_tol,
          io::g17(cond.support));

  s.section("bounds");
  try {
    SumBoundReport sb = sum_bound_monitor(res);
    s.kv("sum_bound_max", sb.max_value);
    s.kv("sum_bound_cap", sb.cap);
    c.check("beta-scaled gap bounded along the ladder", true, io::g17(sb.max_value));
  } catch (const BoundViolated& e) {
    c.check("beta-scaled gap bounded along the ladder", false, e.what());
  }
  try {
    RegularityReport rr = regularity_report(data, res, cfg.solver_tol);
    s.kv("envelope_density_sup", rr.envelope_density_sup);
    s.kv("mu_density_sup", rr.mu_density_sup);
    if (rr.lap_series_checked) {
      s.kv("laplacian_series_max", rr.lap_series_max);
      s.kv("laplacian_series_cap", rr.lap_series_cap);
    }
    c.check("density and derivative monitors bounded", true,
            rr.lap_series_checked ? "with Laplacian series" : "Lipschitz weight");
  } catch (const BoundViolated& e) {
    c.check("density and derivative monitors bounded", false, e.what());
  }

  if (cfg.dump_fields) {
    dump_potentials(res.potentials, out_dir, "phi");
    io::dump_field(res.mu_eq.density, join(out_dir, "mu_eq.csv"));
  }
  return c.all_pass ? 0 : 2;
}

int run_derivative(const io::RunConfig& cfg, io::Summary& s, const std::string& out_dir) {
  require_flat_torus_1(cfg, "derivative");
  ProblemData data = io::build_problem(cfg);
  Field v = cfg.derivative_terms.empty() ? Field(data.grid, 1.0)
                                         : io::build_trig_field(data.grid, cfg.derivative_terms);
  DerivativeReport rep =
      differentiability_test(data, v, cfg.derivative_steps, cfg.schedule, cfg.solver_tol);

  s.section("result");
  s.kv("pairing", rep.pairing_value);
  s.kv("fitted_k", rep.fitted_k);
  s.kv("floor", rep.floor);
  s.kv("extrapolated_error", rep.extrapolated_error);
  for (std::size_t i = 0; i < rep.steps.size(); ++i)
    s.line("step " + io::g17(rep.steps[i]) + "  slope " + io::g17(rep.slopes[i]) + "  gap " +
           io::g17(rep.gaps[i]));
  Checker c{s};
  c.check("slopes match the measure pairing", rep.pass,
          "worst gap " + io::g17(rep.gaps.empty() ? 0.0 : rep.gaps.front()));
  if (cfg.dump_fields) io::dump_field(v, join(out_dir, "direction.csv"));
  return c.all_pass ? 0 : 2;
}

int run_uniqueness(const io::RunConfig& cfg, io::Summary& s, std::uint64_t seed) {
  require_flat_torus_1(cfg, "uniqueness");
  ProblemData data = io::build_problem(cfg);
  UniquenessReport rep =
      uniqueness_test(data, cfg.uniqueness_starts, cfg.schedule, cfg.solver_tol, seed);
  s.section("result");
  s.kv("starts", rep.starts);
  s.kv("seed", std::to_string(rep.seed));
  s.kv("max_potential_spread", rep.max_potential_spread);
  s.kv("max_sum_spread", rep.max_sum_spread);
  Checker c{s};
  c.check("potentials agree across starts", rep.max_potential_spread <= cfg.uniqueness_tol,
          io::g17(rep.max_potential_spread));
  c.check("potential sums agree across starts", rep.max_sum_spread <= cfg.uniqueness_tol,
          io::g17(rep.max_sum_spread));
  return c.all_pass ? 0 : 2;
}

int run_sweep(const io::RunConfig& cfg, io::Summary& s, int threads) {
  require_flat_torus_1(cfg, "sweep");
  struct Row {
    int n = 0;
    double f_value = 0.0;
    double beta_final = 0.0;
    double residual = 0.0;
    double sup_err = -1.0;  // vs the obstacle projection, single-form runs only
    double val_err = -1.0;
    std::string error;
  };
  const std::vector<int>& grids = cfg.sweep_grids;
  std::vector<Row> rows(grids.size());

  // plans are created once per grid up front: creation is the only part of
  // the transform machinery that must not run while other plans execute
  for (int n : grids) {
    io::RunConfig one = cfg;
    one.n = n;
    ProblemData data = io::build_problem(one);
    laplacian(Field(data.grid, 0.0));
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grids.size()) return;
      Row& row = rows[i];
      row.n = grids[i];
      try {
        io::RunConfig one = cfg;
        one.n = grids[i];
        ProblemData data = io::build_problem(one);
        ExtremalResult res = solve_extremal(data, cfg.schedule, cfg.solver_tol);
        row.f_value = res.ladder.back().f_value;
        row.beta_final = res.beta_final;
        row.residual = res.ladder.back().residual;
        if (data.m() == 1) {
          EnvelopeSolution env = project(data.forms[0], data.weight, cfg.solver_tol);
          row.sup_err = sup_abs_diff(res.potentials[0], env.u);
          row.val_err = std::abs(row.f_value -
                                 envelope_energy(data.forms[0], env) / data.forms[0].mass);
        }
      } catch (const Error& e) {
        row.error = e.what();
      }
    }
  };
  const int pool = std::max(1, std::min<int>(threads, static_cast<int>(grids.size())));
  std::vector<std::thread> team;
  for (int t = 0; t < pool - 1; ++t) team.emplace_back(worker);
  worker();
  for (std::thread& t : team) t.join();

  s.section("sweep");
  Checker c{s};
  bool decreasing = true;
  double prev_val = -1.0;
  for (const Row& r : rows) {
    if (!r.error.empty()) {
      s.line("N " + std::to_string(r.n) + "  failed: " + r.error);
      c.check("grid N = " + std::to_string(r.n) + " solved", false, r.error);
      continue;
    }
    std::string line = "N " + std::to_string(r.n) + "  f " + io::g17(r.f_value) + "  residual " +
                       io::g17(r.residual) + "  beta_final " + io::g17(r.beta_final);
    if (r.val_err >= 0.0)
      line += "  value_err " + io::g17(r.val_err) + "  sup_err " + io::g17(r.sup_err);
    s.line(line);
    if (r.val_err >= 0.0) {
      if (prev_val >= 0.0 && r.val_err >= prev_val) decreasing = false;
      prev_val = r.val_err;
    }
  }
  if (prev_val >= 0.0)
    c.check("value error vs the obstacle projection decreases with N", decreasing,
            io::g17(prev_val));
  return c.all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coupled extremal potentials and equilibrium measures on the flat torus"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_flag;
  std::uint64_t seed = 20260816;
  int threads = 1;
  app.add_option("--config", config_path, "run configuration file")->required();
  app.add_option("--out", out_flag, "output directory (overrides config and EQUIPOT_OUT)");
  app.add_option("--seed", seed, "seed for randomized checks");
  app.add_option("--threads", threads, "worker threads for sweep");

  static const char* subs[][2] = {
      {"solve", "run the beta ladder to the extremal potentials"},
      {"solve-beta", "solve the coupled system at a single beta"},
      {"envelope", "project the weight onto admissible potentials for the summed form"},
      {"check", "solve, then verify the equilibrium conditions and bounds"},
      {"derivative", "directional-derivative check of the extremal value"},
      {"uniqueness", "multi-start agreement check"},
      {"sweep", "repeat the solve across sweep.grid sizes"},
  };
  for (auto& sc : subs) app.add_subcommand(sc[0], sc[1]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  std::string raw, out_dir;
  io::RunConfig cfg;
  try {
    raw = io::read_file(config_path);
    cfg = io::parse_config(raw);
    out_dir = resolve_out_dir(out_flag, cfg);
    std::filesystem::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  io::Summary s(raw, cfg);
  const std::string summary_path = join(out_dir, "summary.txt");
  int code = 0;
  try {
    if (sub == "solve") {
      code = run_solve(cfg, s, out_dir);
    } else if (sub == "solve-beta") {
      code = run_solve_beta(cfg, s, out_dir);
    } else if (sub == "envelope") {
      code = run_envelope(cfg, s, out_dir);
    } else if (sub == "check") {
      code = run_check(cfg, s, out_dir);
    } else if (sub == "derivative") {
      code = run_derivative(cfg, s, out_dir);
    } else if (sub == "uniqueness") {
      code = run_uniqueness(cfg, s, seed);
    } else {
      code = run_sweep(cfg, s, threads);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NoConvergence& e) {
    s.section("error");
    s.kv("kind", std::string("NoConvergence"));
    s.kv("detail", std::string(e.what()));
    s.kv("iterations", e.iterations);
    s.kv("residual", e.residual);
    code = 3;
  } catch (const Error& e) {
    s.section("error");
    s.kv("kind", std::string("solver"));
    s.kv("detail", std::string(e.what()));
    code = 3;
  }

  try {
    s.write(summary_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: cannot write summary: %s\n", e.what());
    return 1;
  }
  std::printf("%s: %s (summary: %s)\n", sub.c_str(),
              code == 0   ? "ok"
              : code == 2 ? "assertion failed"
                          : "solver failed",
              summary_path.c_str());
  return code;
}
