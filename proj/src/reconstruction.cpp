#include "tunnelexit/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tunnelexit/error.hpp"

namespace tunnelexit {

bool relativistic_warning(const DetectorMomentum& det, const LaserPulse& pulse) {
  return std::hypot(det.p_z, det.p_rho) > 0.1 * pulse.c();
}

MomentumPair rotate_momentum(double p_z, double p_rho, double angle, double c) {
  const double cb = std::cos(angle);
  const double sb = std::sin(angle);
  return {p_z * cb + (c - p_rho) * sb, c - (c - p_rho) * cb + p_z * sb};
}

MomentumPair exit_momentum(const DetectorMomentum& det, double t_i, const LaserPulse& pulse) {
  return rotate_momentum(det.p_z, det.p_rho, pulse.constants.q_e * beta(pulse, t_i), pulse.c());
}

double ExitPrior::operator()(double t_i) const {
  if (kind == ExitPriorKind::ZeroExit || t.empty()) return 0.0;
  if (t_i <= t.front()) return p_z0.front();
  if (t_i >= t.back()) return p_z0.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), t_i) - t.begin());
  const std::size_t lo = hi - 1;
  const double f = (t_i - t[lo]) / (t[hi] - t[lo]);
  return (1.0 - f) * p_z0[lo] + f * p_z0[hi];
}

ExitPrior ExitPrior::constant(double value) {
  return {ExitPriorKind::QmfTable, {0.0}, {value}};
}

TimeWindow peak_half_cycle(const LaserPulse& pulse) {
  const double quarter = 0.5 * std::numbers::pi / pulse.omega;
  return {pulse.t_peak() - quarter, pulse.t_peak() + quarter};
}

namespace {

double refine_root(const auto& f, double a, double b, double fa, double fb) {
  // Bisection until the bracket is small, then secant steps kept inside it.
  constexpr double tol = 1e-12;
  while (b - a > 1e-6) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (fm == 0.0) return m;
    if ((fm < 0.0) == (fa < 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
      fb = fm;
    }
  }
  for (int it = 0; it < 100 && b - a > tol; ++it) {
    double s = b - fb * (b - a) / (fb - fa);
    if (!(s > a && s < b)) s = 0.5 * (a + b);
    const double fs = f(s);
    if (fs == 0.0) return s;
    if ((fs < 0.0) == (fa < 0.0)) {
      a = s;
      fa = fs;
    } else {
      b = s;
      fb = fs;
    }
    // Pull the far end in so the bracket shrinks on both sides.
    const double mid = 0.5 * (a + b);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (fa < 0.0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
      fb = fm;
    }
  }
  return std::abs(fa) < std::abs(fb) ? a : b;
}

}  // namespace

ExitTimeEstimate estimate_exit_time(const DetectorMomentum& det, const LaserPulse& pulse,
                                    const ExitPrior& prior, const TimeWindow& window,
                                    std::size_t scan_intervals) {
  if (!(window.hi > window.lo) || scan_intervals == 0)
    throw ComputeError(ErrorKind::InvalidArgument, "empty reconstruction window");
  const double q = pulse.constants.q_e;
  auto f = [&](double t) { return prior(t) - q * field_drift(pulse, t) - det.p_z; };

  ExitTimeEstimate est;
  est.scan_intervals = scan_intervals;
  const double h = (window.hi - window.lo) / static_cast<double>(scan_intervals);
  double t_prev = window.lo;
  double f_prev = f(t_prev);
  if (f_prev == 0.0) est.roots.push_back(t_prev);
  for (std::size_t k = 1; k <= scan_intervals; ++k) {
    const double t = k == scan_intervals ? window.hi : window.lo + static_cast<double>(k) * h;
    const double ft = f(t);
    if (ft == 0.0) {
      est.roots.push_back(t);
    } else if (f_prev != 0.0 && (ft < 0.0) != (f_prev < 0.0)) {
      est.roots.push_back(refine_root(f, t_prev, t, f_prev, ft));
    }
    t_prev = t;
    f_prev = ft;
  }
  if (est.roots.empty()) {
    std::ostringstream msg;
    msg << "p_z = " << det.p_z << " is not reached by the drift relation on [" << window.lo << ", "
        << window.hi << "]";
    throw ComputeError(ErrorKind::NoRoot, msg.str());
  }
  est.multiple_roots = est.roots.size() > 1;
  const double peak = pulse.t_peak();
  for (std::size_t i = 1; i < est.roots.size(); ++i)
    if (std::abs(est.roots[i] - peak) < std::abs(est.roots[est.primary] - peak)) est.primary = i;
  return est;
}

ErrorEntry relative_error(double rec, double truth) {
  if (truth == 0.0) return {std::abs(rec), true};
  return {std::abs(rec - truth) / std::abs(truth), false};
}

ReconstructionRecord reconstruct(const DetectorMomentum& det, const LaserPulse& pulse,
                                 const ExitPrior& prior, const TimeWindow& window) {
  const auto est = estimate_exit_time(det, pulse, prior, window);
  const auto p0 = exit_momentum(det, est.t_i(), pulse);
  ReconstructionRecord rec;
  rec.detector = det;
  rec.t_i_est = est.t_i();
  rec.p_z0_rec = p0.p_z;
  rec.p_rho0_rec = p0.p_rho;
  rec.multiple_roots = est.multiple_roots;
  return rec;
}

ReconstructionRecord validate_roundtrip(const TrajectorySpec& spec, const LaserPulse& pulse,
                                        const Potential& potential, const ExitPrior& prior,
                                        const TimeWindow& window, const ClassicalOptions& options) {
  const auto traj = integrate(spec, pulse, potential, pulse.t_end(), options);
  const DetectorMomentum det{traj.final_momentum.p_z, traj.final_momentum.p_rho};
  auto rec = reconstruct(det, pulse, prior, window);
  rec.truth = spec;
  rec.err_t_i = relative_error(rec.t_i_est, spec.t_i);
  rec.err_p_z0 = relative_error(rec.p_z0_rec, spec.p_z0);
  rec.err_p_rho0 = relative_error(rec.p_rho0_rec, spec.p_rho0);
  return rec;
}

}  // namespace tunnelexit
