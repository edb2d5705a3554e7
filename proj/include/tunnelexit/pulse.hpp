#pragma once

#include <numbers>

namespace tunnelexit {

/// Hartree atomic units. Only the speed of light is meant to be varied, and
/// only for tests that probe the 1/c scaling of the magnetic terms.
struct Constants {
  double hbar = 1.0;
  double m_e = 1.0;
  double q_e = 1.0;
  double c_light = 137.035999;
};

inline constexpr Constants atomic_units{};

/// Linearly polarized (along z) pulse with a sin^2 envelope spanning three
/// carrier periods:
///
///   E(t) = E0 sin^2(w tau / 6) cos(w tau),   tau = t - t_start in [0, 6 pi / w]
///
/// and exactly zero outside. The carrier extremum and the envelope maximum
/// coincide at tau = 3 pi / w, where E = -E0. The pulse propagates along +x,
/// so the accompanying magnetic field is B_y = -E / c.
struct LaserPulse {
  double E0 = 0.0;
  double omega = 0.057;
  double t_start = 0.0;
  Constants constants = atomic_units;

  double duration() const { return 6.0 * std::numbers::pi / omega; }
  double t_end() const { return t_start + duration(); }
  double t_peak() const { return t_start + 3.0 * std::numbers::pi / omega; }
  double c() const { return constants.c_light; }
};

double electric_field(const LaserPulse& pulse, double t);

/// Signed y component of the magnetic field, B_y(t) = -E(t)/c.
double magnetic_field(const LaserPulse& pulse, double t);

/// Rotation angle mixing p_z and c - p_x between time t_i and the end of the
/// pulse, in closed form:
///
///   beta = E0 / (16 c w) [6 sin(2 w tau / 3) - 8 sin(w tau) + 3 sin(4 w tau / 3)]
///
/// It satisfies beta'(t) = -E(t)/c and vanishes at both ends of the pulse.
/// Arguments outside the support are clamped to the boundary value (zero).
double beta(const LaserPulse& pulse, double t_i);

/// F(t_i) = integral of E from t_i to the end of the pulse. Equals c * beta(t_i).
double field_drift(const LaserPulse& pulse, double t_i);

/// Keldysh parameter w sqrt(2 I_p) / E0.
double keldysh_gamma(const LaserPulse& pulse, double ionization_potential);

}  // namespace tunnelexit
