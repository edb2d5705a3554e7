#include "tunnelexit/classical.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "tunnelexit/error.hpp"

namespace tunnelexit {

std::optional<ClassicalState> Trajectory::at(double t) const {
  if (states.empty()) return std::nullopt;
  const double eps = 1e-9;
  if (t < states.front().t - eps || t > states.back().t + eps) return std::nullopt;
  auto hi = std::lower_bound(states.begin(), states.end(), t,
                             [](const ClassicalState& s, double v) { return s.t < v; });
  if (hi == states.begin()) return states.front();
  if (hi == states.end()) return states.back();
  const auto& b = *hi;
  const auto& a = *(hi - 1);
  const double f = (t - a.t) / (b.t - a.t);
  return ClassicalState{t, a.x + f * (b.x - a.x), a.z + f * (b.z - a.z),
                        a.p_x + f * (b.p_x - a.p_x), a.p_z + f * (b.p_z - a.p_z)};
}

namespace {

struct Downhill {
  double u;      // direction of the force on the electron along z
  double force;  // |qE|
};

Downhill downhill(double field) {
  if (field == 0.0)
    throw ComputeError(ErrorKind::NoBarrier, "zero field: no downhill side to exit on");
  return {field > 0.0 ? -1.0 : 1.0, std::abs(field)};
}

// Distance s > 0 along the downhill axis where V(s) - |qE| s peaks.
double barrier_distance(const Potential& potential, const Downhill& d) {
  auto slope = [&](double s) { return d.u * potential.dz(d.u * s, 0.0) - d.force; };
  double lo = potential.kind == PotentialKind::SoftCore ? potential.softening / std::sqrt(2.0) : 1e-6;
  if (slope(lo) <= 0.0)
    throw ComputeError(ErrorKind::NoBarrier, "field exceeds the largest binding force");
  double hi = 2.0 * lo;
  while (slope(hi) > 0.0) hi *= 2.0;
  while (hi - lo > 1e-14 * hi) {
    const double mid = 0.5 * (lo + hi);
    (slope(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double barrier_top(const Potential& potential, double field) {
  const auto d = downhill(field);
  return d.u * barrier_distance(potential, d);
}

double exit_point(const Potential& potential, double field, double ionization_potential) {
  const auto d = downhill(field);
  // Along the downhill axis at distance s: g(s) = V + I_p - |qE| s.
  auto g = [&](double s) { return potential(d.u * s, 0.0) + ionization_potential - d.force * s; };
  const double top = barrier_distance(potential, d);
  const double g_top = g(top);
  if (g_top < -1e-12) {
    std::ostringstream msg;
    msg << "barrier top lies " << -g_top << " below -I_p";
    throw ComputeError(ErrorKind::NoBarrier, msg.str());
  }
  if (g_top <= 0.0) return d.u * top;

  double lo = top;
  double hi = 2.0 * top;
  while (g(hi) >= 0.0) hi *= 2.0;
  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) >= 0.0 ? lo : hi) = mid;
  }
  return d.u * 0.5 * (lo + hi);
}

double exit_point(const Potential& potential, const LaserPulse& pulse, double t_i,
                  double ionization_potential) {
  return exit_point(potential, pulse.constants.q_e * electric_field(pulse, t_i), ionization_potential);
}

MomentumPair seed_from_qmf(const MomentProfiles& mp, double exit_z, TransverseModel model,
                           double tolerance, const WavefunctionGrid* wf) {
  MomentumPair out;
  if (auto q = mp.qmf_at(exit_z)) {
    out.p_z = *q;
  } else {
    std::optional<std::size_t> best;
    double best_d = tolerance;
    for (std::size_t a = 0; a < mp.n_z; ++a) {
      const double d = std::abs(mp.z(a) - exit_z);
      if (mp.mask[a] && d <= best_d && (!best || d < best_d)) {
        best = a;
        best_d = d;
      }
    }
    if (!best) {
      std::ostringstream msg;
      msg << "no unmasked QMF sample within " << tolerance << " of z = " << exit_z;
      throw ComputeError(ErrorKind::MaskedOut, msg.str());
    }
    out.p_z = mp.qmf[*best];
  }
  if (model == TransverseModel::CurrentBased) {
    if (wf == nullptr)
      throw ComputeError(ErrorKind::InvalidArgument, "current_based transverse model needs the wavefunction");
    out.p_rho = mean_current_rho(*wf, wf->grid.nearest_z_index(exit_z));
  }
  return out;
}

double classical_energy(const ClassicalState& s, const Potential& potential, bool coulomb,
                        double softening) {
  double e = 0.5 * (s.p_x * s.p_x + s.p_z * s.p_z);
  if (coulomb) e -= potential.charge / std::sqrt(s.x * s.x + s.z * s.z + softening * softening);
  return e;
}

namespace {

using Vec4 = std::array<double, 4>;  // x, z, p_x, p_z

struct ForceModel {
  const FieldFunction& field;
  double q;
  double c;
  bool magnetic;
  bool coulomb;
  double charge;
  double eps2;

  Vec4 rhs(double t, const Vec4& y) const {
    const double e = field(t);
    const double by = magnetic ? -e / c : 0.0;
    const double vx = y[2];
    const double vz = y[3];
    double fx = q * vz * by;
    double fz = -q * (e + vx * by);
    if (coulomb) {
      const double r2 = y[0] * y[0] + y[1] * y[1] + eps2;
      const double k = -charge / (r2 * std::sqrt(r2));
      fx += k * y[0];
      fz += k * y[1];
    }
    return {vx, vz, fx, fz};
  }

  Vec4 step(double t, const Vec4& y, double h) const {
    auto axpy = [](const Vec4& a, double s, const Vec4& b) {
      return Vec4{a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]};
    };
    const Vec4 k1 = rhs(t, y);
    const Vec4 k2 = rhs(t + 0.5 * h, axpy(y, 0.5 * h, k1));
    const Vec4 k3 = rhs(t + 0.5 * h, axpy(y, 0.5 * h, k2));
    const Vec4 k4 = rhs(t + h, axpy(y, h, k3));
    Vec4 out;
    for (int i = 0; i < 4; ++i) out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
  }
};

// Advances y from t0 to t1 in uniform steps no longer than dt. Calls emit for
// every completed step index.
template <class Emit>
Vec4 march(const ForceModel& m, Vec4 y, double t0, double t1, const ClassicalOptions& opt,
           const Potential& potential, Emit&& emit) {
  if (t1 <= t0) return y;
  const auto n = static_cast<long long>(std::ceil((t1 - t0) / opt.dt - 1e-9));
  const double h = (t1 - t0) / static_cast<double>(n);
  for (long long k = 0; k < n; ++k) {
    const double t = t0 + static_cast<double>(k) * h;
    const double tn = (k + 1 == n) ? t1 : t0 + static_cast<double>(k + 1) * h;
    const Vec4 next = m.step(t, y, h);
    for (double v : next) {
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "non-finite trajectory state at t = " << tn;
        throw ComputeError(ErrorKind::StepUnstable, msg.str());
      }
    }
    if (m.field(t) == 0.0 && m.field(t + 0.5 * h) == 0.0 && m.field(tn) == 0.0) {
      const double e0 = classical_energy({t, y[0], y[1], y[2], y[3]}, potential, m.coulomb, opt.softening);
      const double e1 =
          classical_energy({tn, next[0], next[1], next[2], next[3]}, potential, m.coulomb, opt.softening);
      if (std::abs(e1 - e0) > opt.energy_guard * std::max(1.0, std::abs(e0))) {
        std::ostringstream msg;
        msg << "energy changed by " << e1 - e0 << " in a field-free step at t = " << t;
        throw ComputeError(ErrorKind::StepUnstable, msg.str());
      }
    }
    y = next;
    emit(k + 1, tn, y);
  }
  return y;
}

}  // namespace

Trajectory integrate(const TrajectorySpec& spec, const FieldFunction& field, const Constants& constants,
                     const Potential& potential, double t_end, const ClassicalOptions& options) {
  if (!(options.dt > 0.0)) throw ComputeError(ErrorKind::InvalidArgument, "trajectory dt must be > 0");
  if (options.output_stride == 0)
    throw ComputeError(ErrorKind::InvalidArgument, "output stride must be >= 1");
  if (!(t_end >= spec.t_i))
    throw ComputeError(ErrorKind::InvalidArgument, "t_end precedes the exit time");
  if (spec.flags.model == TrajectoryModel::SimpleMan && (spec.p_z0 != 0.0 || spec.p_rho0 != 0.0))
    throw ComputeError(ErrorKind::InvalidArgument, "simple_man trajectories start at rest");

  const ForceModel model{field,
                         constants.q_e,
                         constants.c_light,
                         spec.flags.magnetic_term,
                         spec.flags.coulomb_force,
                         potential.charge,
                         options.softening * options.softening};

  Trajectory traj;
  traj.spec = spec;
  Vec4 y{0.0, spec.exit_z, spec.p_rho0, spec.p_z0};
  traj.states.push_back({spec.t_i, y[0], y[1], y[2], y[3]});
  y = march(model, y, spec.t_i, t_end, options, potential, [&](long long k, double t, const Vec4& s) {
    if (static_cast<std::size_t>(k) % options.output_stride == 0 || t == t_end)
      traj.states.push_back({t, s[0], s[1], s[2], s[3]});
  });
  if (traj.states.back().t != t_end) traj.states.push_back({t_end, y[0], y[1], y[2], y[3]});
  traj.final_momentum = {y[3], y[2]};

  if (spec.flags.coulomb_force && options.long_run > 0.0) {
    const Vec4 late = march(model, y, t_end, t_end + options.long_run, options, potential,
                            [](long long, double, const Vec4&) {});
    traj.long_run_momentum = MomentumPair{late[3], late[2]};
  }
  return traj;
}

Trajectory integrate(const TrajectorySpec& spec, const LaserPulse& pulse, const Potential& potential,
                     double t_end, const ClassicalOptions& options) {
  const FieldFunction field = [&pulse](double t) { return electric_field(pulse, t); };
  return integrate(spec, field, pulse.constants, potential, t_end, options);
}

DeviationReport compare_to_qmf(const Trajectory& traj, const std::vector<MomentProfiles>& profiles,
                               const std::vector<PhaseSpaceMap>& maps) {
  if (!maps.empty() && maps.size() != profiles.size())
    throw ComputeError(ErrorKind::InvalidArgument, "maps must be empty or parallel to profiles");
  DeviationReport report;
  double weight = 0.0;
  double weighted = 0.0;
  for (std::size_t s = 0; s < profiles.size(); ++s) {
    const auto& mp = profiles[s];
    const auto state = traj.at(mp.time);
    if (!state) continue;
    QmfDeviation row;
    row.t = mp.time;
    row.z_cl = state->z;
    row.p_cl = state->p_z;
    const auto q = mp.qmf_at(row.z_cl);
    if (!q) {
      std::ostringstream msg;
      msg << "trajectory at z = " << row.z_cl << " (t = " << mp.time << ") has no valid QMF";
      throw ComputeError(ErrorKind::MaskedOut, msg.str());
    }
    row.qmf = *q;
    row.delta_p = std::abs(row.p_cl - row.qmf);
    const double x = (row.z_cl - mp.z0) / mp.dz;
    const auto a = std::min(static_cast<std::size_t>(x), mp.n_z - 2);
    const double f = x - static_cast<double>(a);
    row.density = (1.0 - f) * mp.p0()[a] + f * mp.p0()[a + 1];
    if (!maps.empty()) {
      const auto& ps = maps[s];
      const auto r = std::min(static_cast<std::size_t>(std::llround((row.z_cl - ps.z0) / ps.dz)), ps.n_z - 1);
      std::size_t best = 0;
      for (std::size_t k = 1; k < ps.n_p; ++k)
        if (ps(r, k) > ps(r, best)) best = k;
      row.p_ridge = ps.p(best);
      row.ridge_distance = std::abs(row.p_cl - row.p_ridge);
      weight += row.density;
      weighted += row.density * row.ridge_distance;
    }
    report.rows.push_back(row);
  }
  if (!report.rows.empty()) {
    double sum = 0.0;
    for (const auto& r : report.rows) sum += r.delta_p;
    report.mean_delta_p = sum / static_cast<double>(report.rows.size());
  }
  report.weighted_ridge_distance = weight > 0.0 ? weighted / weight : 0.0;
  return report;
}

}  // namespace tunnelexit
