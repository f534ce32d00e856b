#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "equipot/energy.hpp"
#include "equipot/grid.hpp"
#include "equipot/problem.hpp"
#include "equipot/random.hpp"

using namespace equipot;

namespace {
const Grid g64(1, 64);
const double pi2 = std::numbers::pi * std::numbers::pi;

// random potential scaled to keep the deformed density well positive
Field admissible_potential(const KahlerForm& f, std::uint64_t seed, double margin = 0.5) {
  Field r = random_band_limited(f.density.grid, seed, 8, 1.0);
  const double room = margin * inf(f.density) / sup_abs(laplacian(r));
  r *= room;
  return r;
}
}  // namespace

TEST_CASE("measure of the flat form") {
  KahlerForm flat = make_form(Field(g64, 1.0));
  Measure mu = ma_measure(flat, Field(g64, 0.0));
  CHECK(sup_abs_diff(mu.density, Field(g64, 1.0)) <= 1e-14);
  CHECK(mu.mass == 1.0);
}

TEST_CASE("measure of an eigenfunction deformation") {
  KahlerForm flat = make_form(Field(g64, 1.0));
  const double eps = 0.001;
  Measure mu = ma_measure(flat, cos_mode(g64, {1, 0}, eps));
  Field expect = cos_mode(g64, {1, 0}, -four_pi_sq * eps);
  shift(expect, 1.0);
  CHECK(sup_abs_diff(mu.density, expect) <= 1e-12);
  CHECK(mu.mass == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("measure mass equals the form mass for random admissible potentials") {
  KahlerForm f = form_from_potential(2.0, cos_mode(g64, {1, 1}, 0.003));
  for (std::uint64_t s : {101u, 102u, 103u}) {
    Measure mu = ma_measure(f, admissible_potential(f, s));
    CHECK(std::abs(mu.mass - f.mass) <= 1e-14 * f.mass);
  }
}

TEST_CASE("inadmissible potentials are rejected") {
  KahlerForm flat = make_form(Field(g64, 1.0));
  CHECK_THROWS_AS(ma_measure(flat, cos_mode(g64, {1, 0}, 1.0)), NotAdmissible);
  CHECK_THROWS_AS(ma_measure(flat, cos_mode(Grid(2, 8), {1, 0, 0, 0}, 0.001)),
                  InvalidArgument);
}

TEST_CASE("complex-2D determinant measure") {
  const Grid g2(2, 12);
  Metric2 id;
  Measure mu0 = ma_measure_nd(id, Field(g2, 0.0));
  CHECK(sup_abs_diff(mu0.density, Field(g2, 1.0)) <= 1e-12);
  CHECK(mu0.mass == Catch::Approx(1.0).epsilon(1e-13));

  // det(I + H) for a mode on the first complex axis has no cross terms:
  // density = 1 - 4 pi^2 eps cos(2 pi x1)
  const double eps = 1e-4;
  Measure mu = ma_measure_nd(id, cos_mode(g2, {1, 0, 0, 0}, eps));
  Field expect = cos_mode(g2, {1, 0, 0, 0}, -four_pi_sq * eps);
  shift(expect, 1.0);
  CHECK(sup_abs_diff(mu.density, expect) / sup_abs(expect) <= 1e-5);
  CHECK(mu.mass == Catch::Approx(1.0).epsilon(1e-12));

  // a genuinely mixed deformation still conserves mass (determinant expansion
  // integrates to zero, Lagrange identity off the Nyquist modes)
  Field psi = cos_mode(g2, {1, 0, 1, 0}, 1e-3) + cos_mode(g2, {0, 1, 1, 0}, 5e-4);
  Measure mixed = ma_measure_nd(id, psi);
  CHECK(std::abs(mixed.mass - 1.0) <= 1e-10);

  CHECK_THROWS_AS(ma_measure_nd(id, cos_mode(g2, {1, 0, 0, 0}, 1.0)), NotAdmissible);
}

TEST_CASE("energy closed forms") {
  KahlerForm flat = make_form(Field(g64, 1.0));
  CHECK(energy(flat, Field(g64, 0.0)) == 0.0);

  KahlerForm heavy = make_form(Field(g64, 2.5));
  CHECK(energy(heavy, Field(g64, 0.7)) == Catch::Approx(0.7 * 2.5).epsilon(1e-14));

  const double eps = 0.002;
  CHECK(energy(flat, cos_mode(g64, {1, 0}, eps)) ==
        Catch::Approx(-pi2 * eps * eps).epsilon(1e-12));
}

TEST_CASE("energy shift rule and prefactor switch") {
  KahlerForm f = form_from_potential(1.5, cos_mode(g64, {2, 0}, 0.002));
  Field phi = admissible_potential(f, 7);
  const double e0 = energy(f, phi);
  Field shifted = phi;
  shift(shifted, 0.3);
  CHECK(energy(f, shifted) - e0 == Catch::Approx(0.3 * f.mass).margin(1e-12));

  // without the prefactor the shift rule gains a factor n+1 = 2
  const double raw0 = energy(f, phi, EnergyPrefactor::none);
  CHECK(raw0 == Catch::Approx(2.0 * e0).margin(1e-14));
  CHECK(energy(f, shifted, EnergyPrefactor::none) - raw0 ==
        Catch::Approx(0.6 * f.mass).margin(1e-12));
}

TEST_CASE("energy derivative matches the measure pairing") {
  KahlerForm f = make_form(Field(g64, 1.0));
  Field phi = admissible_potential(f, 13);
  Field v = random_band_limited(g64, 14, 8, 1.0);
  const Measure mu = ma_measure(f, phi);
  const double want = pairing(v, mu);
  const double t = 1e-3;
  Field pp = phi, pm = phi;
  add_scaled(pp, t, v);
  add_scaled(pm, -t, v);
  // the energy is quadratic in phi, so the central difference is exact
  const double got = (energy(f, pp) - energy(f, pm)) / (2.0 * t);
  CHECK(std::abs(got - want) <= 1e-13 * std::max(1.0, std::abs(want)));
}

TEST_CASE("energy is concave along admissible segments") {
  KahlerForm f = make_form(Field(g64, 1.0));
  Field a = admissible_potential(f, 23);
  Field b = admissible_potential(f, 24);
  const double ea = energy(f, a), eb = energy(f, b);
  for (double t : {0.25, 0.5, 0.75}) {
    Field mix = a;
    mix *= 1.0 - t;
    add_scaled(mix, t, b);
    CHECK(energy(f, mix) >= (1.0 - t) * ea + t * eb - 1e-12);
  }
}

TEST_CASE("coupled functional values and invariances") {
  ProblemData triv = trivial_problem(g64, 1);
  CHECK(f_phi({Field(g64, 0.0)}, triv) == 0.0);
  CHECK(f_phi_beta({Field(g64, 0.0)}, triv, 3.0) == Catch::Approx(0.0).margin(1e-15));

  const double eps = 0.004;
  const double got = f_phi({cos_mode(g64, {1, 0}, eps)}, triv);
  CHECK(got == Catch::Approx(-pi2 * eps * eps - eps).epsilon(1e-10));

  // constants shift both terms identically
  ProblemData two(g64, {make_form(Field(g64, 1.0)), form_from_potential(2.0, cos_mode(g64, {0, 2}, 0.001))},
                  cos_mode(g64, {1, 0}, 0.05));
  std::vector<Field> pots;
  for (int j = 0; j < 2; ++j) pots.push_back(admissible_potential(two.forms[j], 31 + j));
  const double base = f_phi(pots, two);
  const double base_b = f_phi_beta(pots, two, 5.0);
  std::vector<Field> moved = pots;
  shift(moved[0], 0.7);
  shift(moved[1], -1.3);
  CHECK(f_phi(moved, two) == Catch::Approx(base).margin(1e-12));
  CHECK(f_phi_beta(moved, two, 5.0) == Catch::Approx(base_b).margin(1e-12));
}

TEST_CASE("the relaxed functional dominates the sharp one") {
  ProblemData two(g64, {make_form(Field(g64, 1.0)), make_form(Field(g64, 1.5))},
                  cos_mode(g64, {1, 0}, 0.1));
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Field> pots;
    for (int j = 0; j < 2; ++j)
      pots.push_back(admissible_potential(two.forms[j], 1000 + 2 * trial + j));
    const double sharp = f_phi(pots, two);
    for (double beta : {0.5, 4.0, 64.0})
      CHECK(f_phi_beta(pots, two, beta) >= sharp - 1e-13);
  }
}

TEST_CASE("pairing basics") {
  Measure flat = make_measure(Field(g64, 1.0));
  CHECK(pairing(Field(g64, 1.0), flat) == 1.0);
  CHECK(std::abs(pairing(cos_mode(g64, {1, 0}, 1.0), flat)) <= 1e-15);

  Measure mu = make_measure(cos_mode(g64, {2, 0}, 0.3) + Field(g64, 1.0));
  Field u = random_band_limited(g64, 41, 8, 1.0);
  Field w = random_band_limited(g64, 42, 8, 1.0);
  Field lin = 2.0 * u;
  lin += w;
  CHECK(pairing(lin, mu) ==
        Catch::Approx(2.0 * pairing(u, mu) + pairing(w, mu)).margin(1e-13));
}
