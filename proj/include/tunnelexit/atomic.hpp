#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tunnelexit/grid.hpp"

namespace tunnelexit {

enum class PotentialKind { Coulomb, SoftCore };

/// Binding potential of the ion core:
///   coulomb   V = -Z / sqrt(z^2 + rho^2)
///   soft_core V = -Z / sqrt(z^2 + rho^2 + a^2)
struct Potential {
  PotentialKind kind = PotentialKind::Coulomb;
  double charge = 1.0;
  double softening = 1.0;  // soft_core only

  double operator()(double z, double rho) const;
  /// dV/dz at (z, rho).
  double dz(double z, double rho) const;
};

std::vector<std::string> validate(const Potential& p);

/// Samples V on every grid node, z-major like WavefunctionGrid.
std::vector<double> evaluate_potential(const Potential& p, const CylGrid& grid);

/// H psi with H = T_z + T_rho + V + q E z. `field` is q E in atomic units.
/// The kinetic terms use the three-point stencils the propagator uses; the
/// rho stencil is the flux form -(1/2 rho) d/drho (rho d/drho) on the
/// half-offset nodes, which is self-adjoint under the 2 pi rho weight.
std::vector<cplx> apply_hamiltonian(const WavefunctionGrid& wf, const std::vector<double>& potential,
                                    double field = 0.0);

/// <H0> / <psi|psi> with the discrete operators above.
double energy_expectation(const WavefunctionGrid& wf, const Potential& p);
double energy_expectation(const WavefunctionGrid& wf, const std::vector<double>& potential);

struct GroundStateOptions {
  double dt_imag = 0.01;
  double tol = 1e-12;
  std::size_t max_iterations = 200000;
  double seed_width = 1.0;
  int threads = 1;
  /// When set, records the energy after every iteration.
  std::vector<double>* energy_history = nullptr;
};

struct GroundStateResult {
  WavefunctionGrid state;
  double energy;
  std::size_t iterations;
};

/// Imaginary-time relaxation from a node-free Gaussian. Each iteration
/// applies the symmetric split step with a real time step, renormalizes and
/// evaluates <H0>. Stops once the energy change per iteration is below tol.
/// Throws ComputeError(NonConvergence) at the iteration cap.
GroundStateResult ground_state(const Potential& p, const CylGrid& grid,
                               const GroundStateOptions& options = {});

}  // namespace tunnelexit
