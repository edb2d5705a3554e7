#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "tunnelexit/atomic.hpp"
#include "tunnelexit/phase_space.hpp"
#include "tunnelexit/pulse.hpp"

namespace tunnelexit {

// Classical motion happens in the (x, z) plane: z is the polarization axis
// and x the propagation axis, which plays the role of rho for the exit
// momentum p_rho.
struct ClassicalState {
  double t = 0.0;
  double x = 0.0;
  double z = 0.0;
  double p_x = 0.0;
  double p_z = 0.0;
};

enum class TrajectoryModel { SimpleMan, QmfSeeded };

struct TrajectoryFlags {
  bool coulomb_force = false;
  bool magnetic_term = true;
  TrajectoryModel model = TrajectoryModel::QmfSeeded;
};

struct TrajectorySpec {
  double t_i = 0.0;
  double exit_z = 0.0;
  double p_z0 = 0.0;
  double p_rho0 = 0.0;
  TrajectoryFlags flags;
};

struct ClassicalOptions {
  double dt = 0.01;
  std::size_t output_stride = 1;
  /// epsilon in -Z / sqrt(r^2 + epsilon^2)
  double softening = 0.1;
  /// Largest relative energy change allowed for one step with no field.
  double energy_guard = 1e-6;
  /// Extra field-free time for the long-run momentum of Coulomb runs.
  double long_run = 500.0;
};

struct MomentumPair {
  double p_z = 0.0;
  double p_rho = 0.0;
};

struct Trajectory {
  TrajectorySpec spec;
  std::vector<ClassicalState> states;
  MomentumPair final_momentum;                     // at t_end
  std::optional<MomentumPair> long_run_momentum;  // Coulomb runs only

  /// State at time t by linear interpolation between stored samples.
  std::optional<ClassicalState> at(double t) const;
};

/// Outer on-axis root of V(z, 0) + q E(t_i) z = -I_p on the downhill side,
/// signed. Throws NoBarrier when the field is zero or the barrier top lies
/// below -I_p.
double exit_point(const Potential& potential, const LaserPulse& pulse, double t_i,
                  double ionization_potential);
/// Same with q E given directly.
double exit_point(const Potential& potential, double field, double ionization_potential);
/// Signed on-axis position of the top of the field-tilted barrier. Throws
/// NoBarrier for zero field or when the field beats every binding force.
double barrier_top(const Potential& potential, double field);

enum class TransverseModel { Zero, CurrentBased };

/// Exit momenta from the QMF at exit_z. If the QMF is masked there, the
/// nearest masked-in node within `tolerance` is used, else MaskedOut.
/// CurrentBased needs the wavefunction for the rho current.
MomentumPair seed_from_qmf(const MomentProfiles& moments, double exit_z, TransverseModel model,
                           double tolerance, const WavefunctionGrid* wf = nullptr);

using FieldFunction = std::function<double(double)>;

/// RK4 for r'' = -q (E + v x B) - grad V_soft from (t_i, x = 0, z = exit_z)
/// to t_end. With the magnetic term B_y = -E/c. The step is shortened
/// uniformly so that t_end is hit exactly. Throws StepUnstable when a
/// field-free step breaks the energy guard.
Trajectory integrate(const TrajectorySpec& spec, const FieldFunction& field, const Constants& constants,
                     const Potential& potential, double t_end, const ClassicalOptions& options = {});
Trajectory integrate(const TrajectorySpec& spec, const LaserPulse& pulse, const Potential& potential,
                     double t_end, const ClassicalOptions& options = {});

/// Kinetic plus softened Coulomb energy (the latter only if coulomb is set).
double classical_energy(const ClassicalState& s, const Potential& potential, bool coulomb,
                        double softening);

struct QmfDeviation {
  double t = 0.0;
  double z_cl = 0.0;
  double p_cl = 0.0;
  double qmf = 0.0;
  double delta_p = 0.0;
  double p_ridge = 0.0;
  double ridge_distance = 0.0;
  double density = 0.0;  // P0(z_cl)
};

struct DeviationReport {
  std::vector<QmfDeviation> rows;
  double mean_delta_p = 0.0;
  /// sum density * ridge_distance / sum density
  double weighted_ridge_distance = 0.0;
};

/// One row per snapshot whose time lies inside the trajectory. `maps` is
/// either empty (no ridge columns) or parallel to `profiles`. Throws
/// MaskedOut when z_cl leaves a profile or lands on a masked node.
DeviationReport compare_to_qmf(const Trajectory& traj, const std::vector<MomentProfiles>& profiles,
                               const std::vector<PhaseSpaceMap>& maps = {});

}  // namespace tunnelexit
