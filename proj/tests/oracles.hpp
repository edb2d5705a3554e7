#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance run. They use third-party numerics only, never the library's
// own solvers.

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include <cmath>

#include "tunnelexit/atomic.hpp"
#include "tunnelexit/pulse.hpp"

namespace oracle {

// Lowest eigenvalue of the three-point (z) plus flux-form (rho) Hamiltonian,
// assembled here from the stencil definitions and symmetrized with the
// rho weights before a dense diagonalization.
inline double lowest_eigenvalue(const tunnelexit::Potential& p, const tunnelexit::CylGrid& g) {
  const std::size_t nz = g.n_z, nr = g.n_rho, n = nz * nr;
  const double dz = g.dz(), h = g.drho();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  auto idx = [&](std::size_t i, std::size_t j) { return static_cast<Eigen::Index>(i * nr + j); };
  for (std::size_t i = 0; i < nz; ++i) {
    for (std::size_t j = 0; j < nr; ++j) {
      const double rj = (static_cast<double>(j) + 0.5) * h;
      const double r_out = (static_cast<double>(j) + 1.0) * h, r_in = static_cast<double>(j) * h;
      H(idx(i, j), idx(i, j)) = 1.0 / (dz * dz) + 0.5 * (r_out + r_in) / (rj * h * h) + p(g.z(i), rj);
      if (i + 1 < nz) H(idx(i, j), idx(i + 1, j)) = H(idx(i + 1, j), idx(i, j)) = -0.5 / (dz * dz);
      if (j + 1 < nr) {
        // -(1/2 rho) d/drho rho d/drho, symmetrized with sqrt(rho_j rho_{j+1})
        const double rk = (static_cast<double>(j) + 1.5) * h;
        const double off = -0.5 * r_out / (h * h) / std::sqrt(rj * rk);
        H(idx(i, j), idx(i, j + 1)) = H(idx(i, j + 1), idx(i, j)) = off;
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// Adaptive Gauss-Kronrod integral of E over [a, b].
inline double quad_field(const tunnelexit::LaserPulse& pulse, double a, double b) {
  gsl_integration_workspace* ws = gsl_integration_workspace_alloc(2000);
  gsl_function f;
  f.function = [](double t, void* p) {
    return tunnelexit::electric_field(*static_cast<const tunnelexit::LaserPulse*>(p), t);
  };
  f.params = const_cast<tunnelexit::LaserPulse*>(&pulse);
  double result = 0.0, err = 0.0;
  // A roundoff status only means the requested accuracy is below what
  // doubles allow; the estimate itself is still the best available.
  gsl_set_error_handler_off();
  gsl_integration_qag(&f, a, b, 1e-14, 1e-13, 2000, GSL_INTEG_GAUSS61, ws, &result, &err);
  gsl_integration_workspace_free(ws);
  return result;
}

}  // namespace oracle
