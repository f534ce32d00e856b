#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "equipot/beta.hpp"
#include "equipot/energy.hpp"
#include "equipot/grid.hpp"
#include "equipot/problem.hpp"
#include "equipot/random.hpp"

using namespace equipot;

namespace {
Field scaled_admissible(const KahlerForm& f, std::uint64_t seed, double margin = 0.5) {
  Field r = random_band_limited(f.density.grid, seed, f.density.grid.n / 8, 1.0);
  const double room = margin * inf(f.density) / sup_abs(laplacian(r));
  Field out = r;
  out *= room;
  return out;
}
}  // namespace

TEST_CASE("flat data solves exactly at any beta") {
  const Grid g(1, 64);
  for (int m : {1, 2, 3}) {
    ProblemData data = trivial_problem(g, m);
    for (double beta : {1.0, 100.0, 1048576.0}) {
      BetaSolution sol = solve_beta(data, beta);
      CHECK(sol.residual_sup <= 1e-14);
      CHECK_FALSE(sol.exponent_clamped);
      for (const Field& p : sol.potentials) CHECK(sup_abs(p) <= 1e-12);
      CHECK(std::abs(sol.sup_gap) <= 1e-12);
    }
  }
}

TEST_CASE("small cosine weight matches the linearized solution") {
  const Grid g(1, 64);
  const double amp = 0.01, beta = 0.05;
  ProblemData data(g, {make_form(Field(g, 1.0))}, cos_mode(g, {1, 0}, amp));
  BetaSolution sol = solve_beta(data, beta);

  // expand the gap equation to second order in the weight amplitude
  const double eps = four_pi_sq * amp / (four_pi_sq + beta);
  const double c1 = -beta * eps * eps / 4.0;
  Field expected = cos_mode(g, {1, 0}, beta * amp / (four_pi_sq + beta));
  shift(expected, c1);
  CHECK(sup_abs_diff(sol.potentials[0], expected) <= 1e-6);
}

TEST_CASE("solution invariants on a two-form problem") {
  const Grid g(1, 64);
  ProblemData data(g,
                   {make_form(Field(g, 1.0)),
                    make_form(Field(g, 1.0) + cos_mode(g, {0, 1}, 0.1))},
                   cos_mode(g, {1, 0}, 0.3));
  const double beta = 10.0, tol = 1e-10;
  BetaSolution sol = solve_beta(data, beta, std::nullopt, tol);

  REQUIRE(sol.residual_sup <= tol);
  CHECK_FALSE(sol.exponent_clamped);
  const double slack = 10.0 * std::max(sol.residual_sup, 1e-12);

  // normalization: potentials after the first are pinned at sup = 0
  CHECK(std::abs(sup(sol.potentials[1])) <= 1e-12);

  // the common exponential density has unit integral
  Field gap = sol.potentials[0] + sol.potentials[1];
  gap -= data.weight;
  CHECK(std::abs(sol.sup_gap - sup(gap)) <= 1e-13);
  Field ex = gap;
  ex *= beta;
  bool cl = false;
  ex = exp_clamped(ex, cl);
  REQUIRE_FALSE(cl);
  CHECK(std::abs(integrate(ex) - 1.0) <= slack);

  // each form contributes its own mass, and the normalized measures agree
  std::vector<Field> mu;
  for (int j = 0; j < 2; ++j) {
    Measure mj = ma_measure(data.forms[j], sol.potentials[j]);
    CHECK(mj.mass == Catch::Approx(data.forms[j].mass).margin(1e-12));
    Field d = mj.density;
    d *= 1.0 / data.forms[j].mass;
    mu.push_back(std::move(d));
  }
  CHECK(sup_abs_diff(mu[0], mu[1]) <= slack);

  // the stored residual is the recomputed one
  CHECK(std::abs(beta_residual(data, sol.potentials, beta) - sol.residual_sup) <= 1e-14);
}

TEST_CASE("adding a constant to the weight shifts the first potential") {
  const Grid g(1, 64);
  Field w = cos_mode(g, {1, 0}, 0.3);
  ProblemData a(g, {make_form(Field(g, 1.0)), make_form(Field(g, 1.0))}, w);
  Field w_up = w;
  shift(w_up, 1.7);
  ProblemData b(g, {make_form(Field(g, 1.0)), make_form(Field(g, 1.0))}, w_up);

  BetaSolution sa = solve_beta(a, 10.0);
  BetaSolution sb = solve_beta(b, 10.0);
  Field lifted = sa.potentials[0];
  shift(lifted, 1.7);
  CHECK(sup_abs_diff(lifted, sb.potentials[0]) <= 1e-9);
  CHECK(sup_abs_diff(sa.potentials[1], sb.potentials[1]) <= 1e-9);
}

TEST_CASE("independent starts land on the same solution") {
  const Grid g(1, 64);
  ProblemData data(g, {make_form(Field(g, 1.0))}, cos_mode(g, {1, 0}, 0.5));
  const double beta = 100.0, tol = 1e-10;

  BetaSolution base = solve_beta(data, beta, std::nullopt, tol);
  for (std::uint64_t s : {11ull, 12ull, 13ull}) {
    std::vector<Field> init{random_band_limited(g, s, g.n / 8, 0.5)};
    BetaSolution other = solve_beta(data, beta, init, tol);
    CHECK(sup_abs_diff(base.potentials[0], other.potentials[0]) <= 100.0 * tol);
  }
}

TEST_CASE("no perturbation beats the solver output") {
  const Grid g(1, 64);

  ProblemData triv = trivial_problem(g, 2);
  BetaSolution s0 = solve_beta(triv, 10.0);
  MaximizerReport r0 = maximizer_check(s0, triv, 50);
  CHECK(r0.trials == 50);
  CHECK(r0.violations == 0);
  CHECK(r0.worst_gap <= 1e-10);
  CHECK(r0.max_second_diff <= 0.0);

  ProblemData data(g, {make_form(Field(g, 1.0))}, cos_mode(g, {1, 0}, 0.5));
  BetaSolution s1 = solve_beta(data, 10.0);
  MaximizerReport r1 = maximizer_check(s1, data, 100);
  CHECK(r1.violations == 0);
  CHECK(r1.worst_gap <= 1e-10);
  CHECK(r1.max_second_diff <= 0.0);
}

TEST_CASE("regularized value decreases to the sharp value as beta grows") {
  const Grid g(1, 32);
  ProblemData data(g, {make_form(Field(g, 1.0)), make_form(Field(g, 2.0))},
                   cos_mode(g, {1, 0}, 0.2));
  std::vector<Field> phi{scaled_admissible(data.forms[0], 41),
                         scaled_admissible(data.forms[1], 42)};

  const double f = f_phi(phi, data);
  std::vector<double> betas{1.0, 4.0, 16.0, 64.0, 256.0};
  std::vector<double> gaps;
  double prev = 1e300;
  for (double b : betas) {
    const double fb = f_phi_beta(phi, data, b);
    CHECK(fb >= f - 1e-13);
    CHECK(fb <= prev + 1e-14);
    prev = fb;
    gaps.push_back(fb - f);
  }
  // the soft-max gap decays like log(beta)/beta, so a 256-fold beta
  // increase must shrink it by well over a factor of ten
  for (std::size_t i = 1; i < gaps.size(); ++i) CHECK(gaps[i] < gaps[i - 1]);
  CHECK(gaps.back() <= gaps.front() / 10.0);
}

TEST_CASE("solver input validation and iteration budget") {
  const Grid g(1, 64);
  ProblemData data(g, {make_form(Field(g, 1.0))}, cos_mode(g, {1, 0}, 0.5));
  CHECK_THROWS_AS(solve_beta(data, 0.0), InvalidArgument);
  CHECK_THROWS_AS(solve_beta(data, -1.0), InvalidArgument);
  std::vector<Field> bad_init;  // wrong arity
  CHECK_THROWS_AS(solve_beta(data, 1.0, bad_init), InvalidArgument);
  try {
    solve_beta(data, 10.0, std::nullopt, 1e-10, 0);
    FAIL("expected NoConvergence");
  } catch (const NoConvergence& e) {
    CHECK(e.iterations == 0);
    CHECK(e.residual > 1e-10);
  }
}

TEST_CASE("two-complex-dimension backend on flat data") {
  const Grid g(2, 8);
  const Metric2 id{1.0, 1.0, 0.0, 0.0};
  for (int m : {1, 2}) {
    Problem2 data(g, std::vector<Metric2>(m, id), Field(g, 0.0));
    BetaSolution sol = solve_beta_nd(data, 1.0);
    CHECK(sol.residual_sup <= 1e-8);
    for (const Field& p : sol.potentials) CHECK(sup_abs(p) <= 1e-8);
  }
}

TEST_CASE("two-complex-dimension backend matches its linearization") {
  const Grid g(2, 8);
  const Metric2 id{1.0, 1.0, 0.0, 0.0};
  const double amp = 0.01, beta = 1.0;
  // a single mode along the first real axis never excites the mixed
  // second-order terms of the determinant, so the one-dimensional
  // expansion applies verbatim
  Problem2 data(g, {id}, cos_mode(g, {1, 0, 0, 0}, amp));
  BetaSolution sol = solve_beta_nd(data, beta);

  const double eps = four_pi_sq * amp / (four_pi_sq + beta);
  const double c1 = -beta * eps * eps / 4.0;
  Field expected = cos_mode(g, {1, 0, 0, 0}, beta * amp / (four_pi_sq + beta));
  shift(expected, c1);
  CHECK(sup_abs_diff(sol.potentials[0], expected) <= 1e-6);
}

TEST_CASE("two-complex-dimension backend with two metrics") {
  const Grid g(2, 8);
  const Metric2 id{1.0, 1.0, 0.0, 0.0};
  const Metric2 wide{2.0, 1.0, 0.0, 0.0};  // mass det = 2
  Problem2 data(g, {id, wide}, cos_mode(g, {1, 0, 0, 0}, 0.01));
  const double beta = 1.0, tol = 1e-8;
  BetaSolution sol = solve_beta_nd(data, beta, tol);

  REQUIRE(sol.residual_sup <= tol);
  CHECK(std::abs(sup(sol.potentials[1])) <= 1e-12);

  std::vector<Field> mu;
  for (int j = 0; j < 2; ++j) {
    Measure mj = ma_measure_nd(data.metrics[j], sol.potentials[j]);
    CHECK(mj.mass == Catch::Approx(data.metrics[j].det()).margin(1e-8));
    Field d = mj.density;
    d *= 1.0 / data.metrics[j].det();
    mu.push_back(std::move(d));
  }
  CHECK(sup_abs_diff(mu[0], mu[1]) <= 10.0 * std::max(sol.residual_sup, 1e-10));
}
