#include <doctest.h>

#include <cmath>
#include <initializer_list>
#include <numbers>

#include "oracles.hpp"
#include "tunnelexit/pulse.hpp"

using namespace tunnelexit;

namespace {

LaserPulse desk() {
  LaserPulse p;
  p.E0 = 0.095;
  p.omega = 0.057;
  return p;
}

}  // namespace

TEST_CASE("field at the start and at the peak") {
  const LaserPulse p = desk();
  CHECK(electric_field(p, 0.0) == 0.0);
  CHECK(electric_field(p, p.t_peak()) == doctest::Approx(-p.E0).epsilon(1e-15));
  CHECK(electric_field(p, -1.0) == 0.0);
  CHECK(electric_field(p, p.t_end() + 1e-9) == 0.0);
}

TEST_CASE("beta vanishes at the start and at the peak") {
  const LaserPulse p = desk();
  CHECK(beta(p, 0.0) == 0.0);
  CHECK(std::abs(beta(p, p.t_peak())) < 1e-16);
  CHECK(std::abs(beta(p, p.t_end())) < 1e-16);
  // clamped outside the support
  CHECK(beta(p, -10.0) == beta(p, 0.0));
  CHECK(beta(p, p.t_end() + 10.0) == beta(p, p.t_end()));
}

TEST_CASE("beta derivative is -E/c") {
  for (double t0 : {0.0, 12.5}) {
    LaserPulse p = desk();
    p.t_start = t0;
    const double c = p.c();
    const double h = 1e-3;
    double worst = 0.0;
    for (int k = 1; k < 10000; ++k) {
      const double t = p.t_start + p.duration() * k / 10000.0;
      const double d = (beta(p, t + h) - beta(p, t - h)) / (2.0 * h);
      worst = std::max(worst, std::abs(d + electric_field(p, t) / c));
    }
    CHECK(worst < 1e-8 * p.E0 / c);
  }
}

TEST_CASE("beta against quadrature of the field") {
  const LaserPulse p = desk();
  double worst = 0.0;
  for (int k = 0; k <= 200; ++k) {
    const double t = p.duration() * k / 200.0;
    worst = std::max(worst, std::abs(beta(p, t) + oracle::quad_field(p, 0.0, t) / p.c()));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("field drift against quadrature") {
  const LaserPulse p = desk();
  CHECK(field_drift(p, p.t_end()) == 0.0);
  CHECK(std::abs(oracle::quad_field(p, 0.0, p.t_end())) < 1e-10 * p.E0 * p.duration());
  CHECK(std::abs(field_drift(p, 0.0)) < 1e-12);
  for (double t : {3.0, 60.0, 145.0, 165.0, 200.0, 310.0}) {
    CHECK(std::abs(field_drift(p, t) - oracle::quad_field(p, t, p.t_end())) < 1e-10);
    CHECK(field_drift(p, t) == doctest::Approx(p.c() * beta(p, t)).epsilon(1e-12));
  }
}

TEST_CASE("magnetic field scales as 1/c") {
  LaserPulse p = desk();
  CHECK(magnetic_field(p, -5.0) == 0.0);
  CHECK(std::abs(magnetic_field(p, p.t_peak())) == doctest::Approx(p.E0 / p.c()));
  const double b = magnetic_field(p, 150.0);
  const double e = electric_field(p, 150.0);
  p.constants.c_light *= 10.0;
  CHECK(magnetic_field(p, 150.0) == doctest::Approx(b / 10.0).epsilon(1e-14));
  CHECK(electric_field(p, 150.0) == e);
  CHECK(beta(p, 150.0) == doctest::Approx(field_drift(p, 150.0) / p.c()).epsilon(1e-12));
}

TEST_CASE("Keldysh parameter") {
  const LaserPulse p = desk();
  CHECK(keldysh_gamma(p, 0.5) == doctest::Approx(0.057 / 0.095).epsilon(1e-14));
}
