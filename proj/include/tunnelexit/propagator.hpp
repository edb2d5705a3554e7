#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tunnelexit/adi.hpp"
#include "tunnelexit/atomic.hpp"
#include "tunnelexit/pulse.hpp"

namespace tunnelexit {

enum class AbsorberKind { None, Mask };

/// Multiplicative cos^strength mask over a rim of the given width at both z
/// edges and at the outer rho edge, applied once per step. It falls to zero
/// at the outermost node.
struct Absorber {
  AbsorberKind kind = AbsorberKind::None;
  double width = 0.0;
  double strength = 0.125;
};

struct PropagatorConfig {
  double dt = 0.05;
  double t_end = 0.0;
  std::vector<double> snapshot_times;
  Absorber absorber;
  int scheme_order = 2;
  int threads = 1;
};

std::vector<std::string> validate(const PropagatorConfig& config, const CylGrid& grid);

/// Mask values on the grid (all ones for AbsorberKind::None).
std::vector<double> absorber_mask(const Absorber& absorber, const CylGrid& grid);

/// Per-step diagnostics, one entry per time level including t0.
struct PropagationDiagnostics {
  std::vector<double> time;
  std::vector<double> norm;
  std::vector<double> z_mean;
  std::vector<double> dvdz_mean;  // <dV/dz> / norm
  std::vector<double> field;      // q E(t)
};

/// Owns the operator splitting and the absorber for one grid and potential.
class Propagator {
 public:
  Propagator(const CylGrid& grid, const Potential& potential, const Absorber& absorber = {},
             int threads = 1);

  /// Advances wf from wf.time by dt with the field q E evaluated at the
  /// midpoint wf.time + dt / 2. Requires dt > 0.
  void step(WavefunctionGrid& wf, double dt, const LaserPulse& pulse) const;
  /// Same, with an explicit q E held constant over the step.
  void step_with_field(WavefunctionGrid& wf, double dt, double field) const;

  const CylGrid& grid() const { return splitter_.grid(); }
  const std::vector<double>& potential_values() const { return splitter_.potential(); }
  const std::vector<double>& mask() const { return mask_; }

 private:
  AdiSplitter splitter_;
  std::vector<double> mask_;
  bool has_mask_;
};

/// One step from time t; convenience wrapper that builds a Propagator.
WavefunctionGrid step(const WavefunctionGrid& wf, double t, double dt, const LaserPulse& pulse,
                      const Potential& potential);

struct PropagationRun {
  WavefunctionGrid initial;
  LaserPulse pulse;
  Potential potential;
  PropagatorConfig config;
  std::map<double, WavefunctionGrid> snapshots;
  PropagationDiagnostics diagnostics;
};

/// Called for each snapshot as it is reached. Returning false tells
/// propagate not to keep the snapshot in run.snapshots.
using SnapshotSink = std::function<bool(double requested_time, const WavefunctionGrid&)>;

/// Runs from initial.time to config.t_end in steps of dt. A snapshot for a
/// requested time t_s is taken at the time level nearest t_s, so the stored
/// time is within dt/2 of the request. Throws ComputeError(Aborted) with the
/// first offending time if the state stops being finite.
void propagate(PropagationRun& run, const SnapshotSink& sink = {});

}  // namespace tunnelexit
