#include <doctest.h>

#include <cmath>
#include <initializer_list>
#include <numbers>

#include "tunnelexit/classical.hpp"
#include "tunnelexit/error.hpp"
#include "tunnelexit/reconstruction.hpp"

using namespace tunnelexit;

namespace {

const Potential hydrogen{PotentialKind::Coulomb, 1.0, 1.0};

LaserPulse desk() {
  LaserPulse p;
  p.E0 = 0.095;
  p.omega = 0.057;
  return p;
}

TrajectorySpec spec_at(double t_i, double p_z0, double p_rho0, bool magnetic, bool coulomb) {
  TrajectorySpec s;
  s.t_i = t_i;
  s.exit_z = 0.0;
  s.p_z0 = p_z0;
  s.p_rho0 = p_rho0;
  s.flags = {coulomb, magnetic, TrajectoryModel::QmfSeeded};
  return s;
}

// Positive on the z axis near the origin, so the quadratic oracle applies.
double outer_root(double e, double ip) { return (ip + std::sqrt(ip * ip - 4.0 * e)) / (2.0 * e); }

}  // namespace

TEST_CASE("free motion is a straight line") {
  const LaserPulse off;
  const auto traj = integrate(spec_at(0.0, 0.1, 0.2, false, false), off, hydrogen, 50.0);
  for (const auto& s : traj.states) {
    CHECK(std::abs(s.p_z - 0.1) < 1e-14);
    CHECK(std::abs(s.p_x - 0.2) < 1e-14);
    CHECK(std::abs(s.z - 0.1 * s.t) < 1e-12);
    CHECK(std::abs(s.x - 0.2 * s.t) < 1e-12);
  }
  CHECK(traj.states.back().t == 50.0);
}

TEST_CASE("constant field gives a linear momentum change") {
  const FieldFunction field = [](double) { return 0.05; };
  const auto traj = integrate(spec_at(0.0, 0.0, 0.0, false, false), field, atomic_units, hydrogen, 10.0);
  CHECK(traj.final_momentum.p_z == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(traj.final_momentum.p_rho == 0.0);
}

TEST_CASE("simple-man limit follows the drift integral") {
  const LaserPulse p = desk();
  for (double t_i : {140.0, 150.0, 165.0}) {
    const auto traj = integrate(spec_at(t_i, 0.03, 0.01, false, false), p, hydrogen, p.t_end());
    const double expect = 0.03 - p.constants.q_e * field_drift(p, t_i);
    CHECK(std::abs(traj.final_momentum.p_z - expect) < 1e-10);
    CHECK(traj.final_momentum.p_rho == doctest::Approx(0.01).epsilon(1e-12));
  }
}

TEST_CASE("magnetic term rotates (p_z, c - p_x) by beta") {
  const LaserPulse p = desk();
  for (double t_i : {142.0, 155.0, 165.0}) {
    const auto traj = integrate(spec_at(t_i, 0.05, 0.02, true, false), p, hydrogen, p.t_end());
    // The inverse of the exit map sends the exit momenta to the detector.
    const auto expect = rotate_momentum(0.05, 0.02, -p.constants.q_e * beta(p, t_i), p.c());
    CHECK(traj.final_momentum.p_z == doctest::Approx(expect.p_z).epsilon(1e-6));
    CHECK(traj.final_momentum.p_rho == doctest::Approx(expect.p_rho).epsilon(1e-6));
    const double c = p.c();
    const double before = 0.05 * 0.05 + (c - 0.02) * (c - 0.02);
    const double after = std::pow(traj.final_momentum.p_z, 2) + std::pow(c - traj.final_momentum.p_rho, 2);
    CHECK(after == doctest::Approx(before).epsilon(1e-10));
  }
}

TEST_CASE("RK4 converges at fourth order") {
  const LaserPulse p = desk();
  auto final_pz = [&](double dt) {
    ClassicalOptions o;
    o.dt = dt;
    return integrate(spec_at(150.0, 0.05, 0.02, true, false), p, hydrogen, p.t_end(), o).states.back().z;
  };
  const double a = final_pz(0.8), b = final_pz(0.4), c = final_pz(0.2);
  const double order = std::log2(std::abs(a - b) / std::abs(b - c));
  MESSAGE("fitted RK4 order " << order);
  CHECK(order == doctest::Approx(4.0).epsilon(0.075));
}

TEST_CASE("field-free Coulomb orbit conserves energy") {
  const LaserPulse off;
  TrajectorySpec s = spec_at(0.0, 0.0, 0.5, false, true);
  s.exit_z = 5.0;
  ClassicalOptions o;
  o.long_run = 0.0;
  const auto traj = integrate(s, off, hydrogen, 1000.0, o);
  const double e0 = classical_energy(traj.states.front(), hydrogen, true, o.softening);
  const double e1 = classical_energy(traj.states.back(), hydrogen, true, o.softening);
  CHECK(std::abs(e1 - e0) / std::abs(e0) < 1e-8);
  CHECK_FALSE(traj.long_run_momentum.has_value());
}

TEST_CASE("a head-on core pass with a coarse step trips the energy guard") {
  const LaserPulse off;
  TrajectorySpec s = spec_at(0.0, -1.0, 0.0, false, true);
  s.exit_z = 5.0;
  ClassicalOptions o;
  o.dt = 0.1;
  try {
    integrate(s, off, hydrogen, 20.0, o);
    FAIL("expected StepUnstable");
  } catch (const ComputeError& e) {
    CHECK(e.kind() == ErrorKind::StepUnstable);
  }
}

TEST_CASE("Coulomb runs report a long-run momentum") {
  const LaserPulse p = desk();
  ClassicalOptions o;
  o.long_run = 50.0;
  TrajectorySpec s = spec_at(160.0, 0.2, 0.0, true, true);
  s.exit_z = -12.0;
  const auto traj = integrate(s, p, hydrogen, p.t_end(), o);
  REQUIRE(traj.long_run_momentum.has_value());
  CHECK(traj.long_run_momentum->p_z != traj.final_momentum.p_z);
}

TEST_CASE("input checks") {
  const LaserPulse p = desk();
  TrajectorySpec s = spec_at(150.0, 0.1, 0.0, true, false);
  s.flags.model = TrajectoryModel::SimpleMan;
  CHECK_THROWS_AS(integrate(s, p, hydrogen, p.t_end()), ComputeError);
  ClassicalOptions o;
  o.dt = 0.0;
  CHECK_THROWS_AS(integrate(spec_at(150.0, 0.0, 0.0, true, false), p, hydrogen, p.t_end(), o), ComputeError);
  CHECK_THROWS_AS(integrate(spec_at(150.0, 0.0, 0.0, true, false), p, hydrogen, 100.0), ComputeError);
}

TEST_CASE("exit point against the quadratic roots") {
  // Field q E = -0.05 pushes the electron towards +z.
  CHECK(std::abs(exit_point(hydrogen, -0.05, 0.5) - outer_root(0.05, 0.5)) < 1e-6);
  CHECK(std::abs(exit_point(hydrogen, -0.05, 0.5) - 7.2360679775) < 1e-6);
  CHECK(std::abs(exit_point(hydrogen, 0.05, 0.5) + 7.2360679775) < 1e-6);
  CHECK(std::abs(std::abs(exit_point(hydrogen, 0.0625, 0.5)) - 4.0) < 1e-4);
  CHECK(std::abs(barrier_top(hydrogen, -0.0625) - 4.0) < 1e-8);
  for (double f : {0.0, 0.08}) {
    try {
      exit_point(hydrogen, f, 0.5);
      FAIL("expected NoBarrier");
    } catch (const ComputeError& e) {
      CHECK(e.kind() == ErrorKind::NoBarrier);
    }
  }
}

TEST_CASE("exit point follows the pulse sign") {
  const LaserPulse p = desk();
  // The peak itself is over the barrier at this amplitude.
  CHECK_THROWS_AS(exit_point(hydrogen, p, p.t_peak(), 0.5), ComputeError);
  for (double t : {145.0, 140.0}) {
    const double e = electric_field(p, t);
    const double z = exit_point(hydrogen, p, t, 0.5);
    CHECK((z > 0.0) == (e < 0.0));
    CHECK(std::abs(z) == doctest::Approx(outer_root(std::abs(e), 0.5)).epsilon(1e-10));
  }
}

namespace {

MomentProfiles boosted_profiles(double centre, double k, WavefunctionGrid* keep = nullptr) {
  CylGrid g;
  g.z_min = -12.0;
  g.z_max = 12.0;
  g.n_z = 241;
  g.rho_max = 8.0;
  g.n_rho = 40;
  WavefunctionGrid wf(g);
  for (std::size_t i = 0; i < g.n_z; ++i)
    for (std::size_t j = 0; j < g.n_rho; ++j) {
      const double z = g.z(i) - centre, r = g.rho(j);
      wf.at(i, j) = std::exp(-0.5 * z * z - 0.5 * r * r) * std::polar(1.0, k * g.z(i));
    }
  normalize(wf);
  if (keep) *keep = wf;
  return moments(wigner(reduce_to_z(wf, full_window(g))), 1);
}

}  // namespace

TEST_CASE("seeding from the QMF") {
  const auto still = boosted_profiles(0.0, 0.0);
  CHECK(std::abs(seed_from_qmf(still, 0.5, TransverseModel::Zero, 0.2).p_z) < 1e-12);

  CylGrid g;
  WavefunctionGrid wf(g);
  const auto moving = boosted_profiles(3.0, 0.3, &wf);
  const auto seed = seed_from_qmf(moving, 3.0, TransverseModel::Zero, 0.2);
  CHECK(std::abs(seed.p_z - 0.3) < 1e-6);
  CHECK(seed.p_rho == 0.0);
  // No transverse current in this state.
  CHECK(std::abs(seed_from_qmf(moving, 3.0, TransverseModel::CurrentBased, 0.2, &wf).p_rho) < 1e-12);
  CHECK_THROWS_AS(seed_from_qmf(moving, 3.0, TransverseModel::CurrentBased, 0.2), ComputeError);
  try {
    seed_from_qmf(moving, 11.9, TransverseModel::Zero, 0.2);
    FAIL("expected MaskedOut");
  } catch (const ComputeError& e) {
    CHECK(e.kind() == ErrorKind::MaskedOut);
  }
}

TEST_CASE("comparison with the QMF") {
  // Synthetic profiles with a uniform QMF of 0.2.
  auto flat = [](double t) {
    MomentProfiles mp;
    mp.z0 = -50.0;
    mp.dz = 0.5;
    mp.n_z = 201;
    mp.time = t;
    mp.moments = {std::vector<double>(mp.n_z, 1.0), std::vector<double>(mp.n_z, 0.2)};
    mp.qmf.assign(mp.n_z, 0.2);
    mp.mask.assign(mp.n_z, true);
    return mp;
  };
  const LaserPulse off;
  const auto traj = integrate(spec_at(145.0, 0.2, 0.0, false, false), off, hydrogen, 175.0);
  const auto report = compare_to_qmf(traj, {flat(150.0), flat(160.0), flat(170.0), flat(190.0)});
  CHECK(report.rows.size() == 3);
  for (const auto& r : report.rows) CHECK(r.delta_p < 1e-14);
  CHECK(report.mean_delta_p < 1e-14);

  auto narrow = flat(160.0);
  narrow.mask.assign(narrow.n_z, false);
  CHECK_THROWS_AS(compare_to_qmf(traj, {narrow}), ComputeError);
}
