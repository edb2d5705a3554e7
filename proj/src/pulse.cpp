#include "tunnelexit/pulse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tunnelexit {

namespace {

// Local time clamped to the support [0, duration].
double clamp_tau(const LaserPulse& pulse, double t) {
  return std::clamp(t - pulse.t_start, 0.0, pulse.duration());
}

}  // namespace

double electric_field(const LaserPulse& pulse, double t) {
  const double tau = t - pulse.t_start;
  if (tau < 0.0 || tau > pulse.duration()) return 0.0;
  const double s = std::sin(pulse.omega * tau / 6.0);
  return pulse.E0 * s * s * std::cos(pulse.omega * tau);
}

double magnetic_field(const LaserPulse& pulse, double t) {
  return -electric_field(pulse, t) / pulse.c();
}

double beta(const LaserPulse& pulse, double t_i) {
  const double x = pulse.omega * clamp_tau(pulse, t_i);
  const double bracket = 6.0 * std::sin(2.0 * x / 3.0) - 8.0 * std::sin(x) +
                         3.0 * std::sin(4.0 * x / 3.0);
  return pulse.E0 / (16.0 * pulse.c() * pulse.omega) * bracket;
}

double field_drift(const LaserPulse& pulse, double t_i) {
  // beta(t_end) = 0, so the antiderivative difference reduces to c * beta(t_i).
  // Written out explicitly so it stays independent of c.
  const double x = pulse.omega * clamp_tau(pulse, t_i);
  const double bracket = 6.0 * std::sin(2.0 * x / 3.0) - 8.0 * std::sin(x) +
                         3.0 * std::sin(4.0 * x / 3.0);
  return pulse.E0 / (16.0 * pulse.omega) * bracket;
}

double keldysh_gamma(const LaserPulse& pulse, double ionization_potential) {
  if (pulse.E0 == 0.0) return std::numeric_limits<double>::infinity();
  return pulse.omega * std::sqrt(2.0 * ionization_potential) / pulse.E0;
}

}  // namespace tunnelexit
