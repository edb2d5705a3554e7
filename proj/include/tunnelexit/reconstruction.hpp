#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tunnelexit/classical.hpp"
#include "tunnelexit/pulse.hpp"

namespace tunnelexit {

struct DetectorMomentum {
  double p_z = 0.0;
  double p_rho = 0.0;
};

/// True when |p| exceeds 0.1 c, where the nonrelativistic map stops being
/// trustworthy.
bool relativistic_warning(const DetectorMomentum& det, const LaserPulse& pulse);

/// Detector momenta rotated back to the exit by the angle q beta(t_i):
///   p_z0   = p_z cos b + (c - p_rho) sin b
///   p_rho0 = c - (c - p_rho) cos b + p_z sin b
MomentumPair exit_momentum(const DetectorMomentum& det, double t_i, const LaserPulse& pulse);

/// The same rotation with an explicit angle; angle -b inverts angle b.
MomentumPair rotate_momentum(double p_z, double p_rho, double angle, double c);

enum class ExitPriorKind { ZeroExit, QmfTable };

/// Exit momentum p_z0 assumed as a function of exit time. The table is
/// interpolated linearly and held constant beyond its ends.
struct ExitPrior {
  ExitPriorKind kind = ExitPriorKind::ZeroExit;
  std::vector<double> t;
  std::vector<double> p_z0;

  double operator()(double t_i) const;
  static ExitPrior constant(double p_z0);
};

struct TimeWindow {
  double lo = 0.0;
  double hi = 0.0;
};

/// Half-cycle window centred on the field peak, where the drift is monotone.
TimeWindow peak_half_cycle(const LaserPulse& pulse);

struct ExitTimeEstimate {
  std::vector<double> roots;
  std::size_t primary = 0;   // index of the root nearest the field peak
  bool multiple_roots = false;
  std::size_t scan_intervals = 0;

  double t_i() const { return roots.at(primary); }
};

/// Roots of p_z = prior(t) - q field_drift(t) in the window: a uniform scan
/// for sign changes, then bisection and secant refinement to 1e-12 in time.
/// Throws NoRoot when there is none.
ExitTimeEstimate estimate_exit_time(const DetectorMomentum& det, const LaserPulse& pulse,
                                    const ExitPrior& prior, const TimeWindow& window,
                                    std::size_t scan_intervals = 4096);

struct ErrorEntry {
  double value = 0.0;
  bool absolute = false;  // the truth was zero
};

struct ReconstructionRecord {
  DetectorMomentum detector;
  double t_i_est = 0.0;
  double p_z0_rec = 0.0;
  double p_rho0_rec = 0.0;
  bool multiple_roots = false;
  std::optional<TrajectorySpec> truth;
  std::optional<ErrorEntry> err_t_i;
  std::optional<ErrorEntry> err_p_z0;
  std::optional<ErrorEntry> err_p_rho0;
};

/// |rec - truth| / |truth|, or |rec - truth| flagged absolute when truth = 0.
ErrorEntry relative_error(double rec, double truth);

/// Reconstruction from detector momenta alone.
ReconstructionRecord reconstruct(const DetectorMomentum& det, const LaserPulse& pulse,
                                 const ExitPrior& prior, const TimeWindow& window);

/// Integrates spec forward to the end of the pulse, reconstructs from the
/// final momenta, and fills the errors against spec.
ReconstructionRecord validate_roundtrip(const TrajectorySpec& spec, const LaserPulse& pulse,
                                        const Potential& potential, const ExitPrior& prior,
                                        const TimeWindow& window,
                                        const ClassicalOptions& options = {});

}  // namespace tunnelexit
