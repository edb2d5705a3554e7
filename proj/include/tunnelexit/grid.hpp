#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

namespace tunnelexit {

using cplx = std::complex<double>;

/// Cylindrical (z, rho) grid. z nodes are z_min + i dz for i = 0..n_z-1 and
/// must include z = 0. rho nodes are half-offset, rho_j = (j + 1/2) drho, so
/// the coordinate singularity at rho = 0 is never sampled.
///
/// Quadrature: midpoint in rho and trapezoid in z. The Dirichlet nodes just
/// outside [z_min, z_max] carry zero weight, so the z rule reduces to dz * sum.
/// A cell (i, j) has weight 2 pi rho_j drho dz.
struct CylGrid {
  double z_min = -20.0;
  double z_max = 20.0;
  std::size_t n_z = 401;
  double rho_max = 20.0;
  std::size_t n_rho = 200;

  double dz() const { return (z_max - z_min) / static_cast<double>(n_z - 1); }
  double drho() const { return rho_max / static_cast<double>(n_rho); }
  double z(std::size_t i) const { return z_min + static_cast<double>(i) * dz(); }
  double rho(std::size_t j) const { return (static_cast<double>(j) + 0.5) * drho(); }
  double weight(std::size_t j) const;
  std::size_t size() const { return n_z * n_rho; }
  std::size_t index(std::size_t i, std::size_t j) const { return i * n_rho + j; }
  /// Index of the z node at z = 0.
  std::size_t origin_index() const;
  /// Nearest z node to a position (clamped into the grid).
  std::size_t nearest_z_index(double z) const;
};

/// Every violated invariant, as "field: reason" strings. Empty means valid.
std::vector<std::string> validate(const CylGrid& grid);

/// A complex field on a CylGrid, stored z-major: psi[i * n_rho + j].
struct WavefunctionGrid {
  CylGrid grid;
  std::vector<cplx> psi;
  double time = 0.0;

  explicit WavefunctionGrid(const CylGrid& g) : grid(g), psi(g.size(), cplx{0.0, 0.0}) {}
  WavefunctionGrid(const CylGrid& g, std::vector<cplx> values, double t = 0.0);

  cplx& at(std::size_t i, std::size_t j) { return psi[grid.index(i, j)]; }
  const cplx& at(std::size_t i, std::size_t j) const { return psi[grid.index(i, j)]; }
};

/// Discrete integral of |psi|^2 with the 2 pi rho weight.
double norm(const WavefunctionGrid& wf);
/// Rescales to unit norm and returns the norm before rescaling.
double normalize(WavefunctionGrid& wf);
/// Weighted inner product <f|g>.
cplx inner(const WavefunctionGrid& f, const WavefunctionGrid& g);
double expectation_z(const WavefunctionGrid& wf);
bool all_finite(const WavefunctionGrid& wf);

/// Probability in z > z_cut (or z < z_cut when `below` is set).
double probability_beyond(const WavefunctionGrid& wf, double z_cut, bool below = false);

}  // namespace tunnelexit
