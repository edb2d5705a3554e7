#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tunnelexit/atomic.hpp"
#include "tunnelexit/error.hpp"
#include "oracles.hpp"

using namespace tunnelexit;

namespace {

CylGrid small_grid() {
  CylGrid g;
  g.z_min = -8.0;
  g.z_max = 8.0;
  g.n_z = 41;
  g.rho_max = 8.0;
  g.n_rho = 20;
  return g;
}

}  // namespace

TEST_CASE("potential samples") {
  CylGrid g = small_grid();
  Potential soft{PotentialKind::SoftCore, 1.0, 1.0};
  const auto v = evaluate_potential(soft, g);
  const std::size_t i0 = g.origin_index();
  CHECK(v[g.index(i0, 0)] == doctest::Approx(-1.0 / std::sqrt(1.0 + std::pow(g.drho() / 2, 2))));

  Potential coul{PotentialKind::Coulomb, 1.0, 0.0};
  const auto vc = evaluate_potential(coul, g);
  const std::size_t i2 = g.nearest_z_index(2.0);
  CHECK(g.z(i2) == doctest::Approx(2.0));
  CHECK(vc[g.index(i2, 0)] == doctest::Approx(-1.0 / std::sqrt(4.0 + std::pow(g.drho() / 2, 2))));

  for (double x : vc) {
    CHECK(x < 0.0);
    CHECK(std::isfinite(x));
  }
  CHECK(std::abs(vc[g.index(g.n_z - 1, g.n_rho - 1)]) < 1.0 / std::min(g.z_max, g.rho_max));
  CHECK(soft.dz(1.0, 0.5) == doctest::Approx((soft(1.0 + 1e-6, 0.5) - soft(1.0 - 1e-6, 0.5)) / 2e-6));
}

TEST_CASE("potential validation") {
  CHECK(validate(Potential{PotentialKind::Coulomb, 0.0, 1.0}).size() == 1);
  CHECK(validate(Potential{PotentialKind::SoftCore, 1.0, 0.0}).size() == 1);
  CHECK(validate(Potential{PotentialKind::Coulomb, 1.0, 0.0}).empty());
}

TEST_CASE("soft-core ground state matches a direct diagonalization") {
  const CylGrid g = small_grid();
  const Potential p{PotentialKind::SoftCore, 1.0, 1.0};
  GroundStateOptions o;
  o.dt_imag = 0.02;
  o.tol = 1e-13;
  const auto gs = ground_state(p, g, o);
  const double exact = oracle::lowest_eigenvalue(p, g);
  CHECK(std::abs(gs.energy - exact) < 1e-4);
  CHECK(std::abs(norm(gs.state) - 1.0) < 1e-6);
  CHECK(std::abs(expectation_z(gs.state)) < 1e-10);
  CHECK(energy_expectation(gs.state, p) == doctest::Approx(gs.energy).epsilon(1e-12));
}

TEST_CASE("coulomb ground state on a coarse grid is close to -1/2") {
  CylGrid g;
  g.z_min = -15.0;
  g.z_max = 15.0;
  g.n_z = 151;
  g.rho_max = 15.0;
  g.n_rho = 75;
  const Potential p;
  GroundStateOptions o;
  o.tol = 1e-10;
  const auto gs = ground_state(p, g, o);
  // h = 0.2 overbinds by a couple of percent; the acceptance run refines.
  CHECK(gs.energy == doctest::Approx(-0.5).epsilon(0.05));
  CHECK(std::abs(expectation_z(gs.state)) < 1e-10);
  double p_in_6 = 0.0;
  for (std::size_t i = 0; i < g.n_z; ++i)
    if (std::abs(g.z(i)) <= 3.0)
      for (std::size_t j = 0; j < g.n_rho; ++j) p_in_6 += std::norm(gs.state.at(i, j)) * g.weight(j);
  CHECK(p_in_6 > 0.9);
}

TEST_CASE("iteration cap raises NonConvergence") {
  GroundStateOptions o;
  o.max_iterations = 3;
  o.tol = 1e-14;
  try {
    ground_state(Potential{}, small_grid(), o);
    FAIL("expected NonConvergence");
  } catch (const ComputeError& e) {
    CHECK(e.kind() == ErrorKind::NonConvergence);
  }
}

TEST_CASE("grid validation reports every problem") {
  CylGrid g;
  g.n_z = 4;
  g.n_rho = 4;
  g.rho_max = -1.0;
  const auto issues = validate(g);
  CHECK(issues.size() >= 3);
  CHECK(std::find(issues.begin(), issues.end(), "grid.n_z: must be ≥ 8") != issues.end());
}

TEST_CASE("normalize and inner product") {
  const CylGrid g = small_grid();
  WavefunctionGrid wf(g);
  for (std::size_t i = 0; i < g.n_z; ++i)
    for (std::size_t j = 0; j < g.n_rho; ++j) wf.at(i, j) = std::exp(-0.3 * (g.z(i) * g.z(i) + g.rho(j) * g.rho(j)));
  normalize(wf);
  CHECK(std::abs(norm(wf) - 1.0) < 1e-12);
  CHECK(inner(wf, wf).real() == doctest::Approx(1.0));
  CHECK(probability_beyond(wf, 0.0) == doctest::Approx(probability_beyond(wf, 0.0, true)));
}
