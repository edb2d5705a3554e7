#pragma once

#include <vector>

#include "tunnelexit/grid.hpp"

namespace tunnelexit {

/// Alternating-direction Crank-Nicolson splitter for H = T_z + T_rho + W,
/// W = V + q E z. The diagonal W is shared equally between the two
/// one-dimensional operators H_z = T_z + W/2 and H_rho = T_rho + W/2, and a
/// step is the symmetric composition
///
///   C_z(h/2) C_rho(h) C_z(h/2),   C_d(h) = (1 + h H_d / 2)^-1 (1 - h H_d / 2).
///
/// With h = i dt every factor is exactly unitary in the weighted norm, and the
/// composition is second order in dt. With real h = dtau it is an
/// imaginary-time step.
///
/// Lines are independent, so the z sweep (batched over rho columns) and the
/// rho sweep (one row at a time) can be split over threads without changing
/// a single bit of the result.
class AdiSplitter {
 public:
  AdiSplitter(const CylGrid& grid, std::vector<double> potential, int threads = 1);

  void step(std::vector<cplx>& psi, cplx h, double field) const;

  const CylGrid& grid() const { return grid_; }
  const std::vector<double>& potential() const { return potential_; }

 private:
  void sweep_z(std::vector<cplx>& psi, cplx h, double field) const;
  void sweep_rho(std::vector<cplx>& psi, cplx h, double field) const;

  CylGrid grid_;
  std::vector<double> potential_;
  std::vector<double> rho_lower_;
  std::vector<double> rho_upper_;
  int threads_;
  mutable std::vector<cplx> work_;
  mutable std::vector<cplx> cprime_;
};

}  // namespace tunnelexit
