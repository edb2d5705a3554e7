#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "tunnelexit/atomic.hpp"
#include "tunnelexit/grid.hpp"
#include "tunnelexit/pulse.hpp"

namespace tunnelexit {

/// Inclusive range of z node indices.
struct ZWindow {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t size() const { return last - first + 1; }
};

/// Tiles [0, n_z) with windows `width` a.u. wide overlapping by `overlap`
/// (fraction of the window). A width covering the box yields one window.
std::vector<ZWindow> tile_windows(const CylGrid& grid, double width, double overlap = 0.1);
ZWindow full_window(const CylGrid& grid);

enum class ReductionMode {
  /// rho_red(z, z') = sum_j Psi(z, rho_j) conj(Psi(z', rho_j)) 2 pi rho_j drho
  DensityMatrix,
  /// phi(z) = sum_j Psi(z, rho_j) 2 pi rho_j drho, normalized to unit norm
  /// in z, and rho_red = phi phi^*.
  AmplitudeIntegrated,
};

/// How the lag zeta is sampled in the Wigner transform.
enum class ZetaSampling {
  /// zeta = m dz, so z +- zeta are grid nodes. Momentum content above
  /// pi / (2 dz) aliases.
  Grid,
  /// Psi is first refined to dz / 2 with its band-limited interpolant: the
  /// column is zero-padded to twice the box, transformed, and resampled with
  /// the Nyquist mode split evenly. Grid nodes are reproduced exactly and the
  /// p range covers the whole grid spectrum. A window spanning the full grid
  /// then covers the padded period, and the transform wraps around it.
  Refined,
};

struct ReducedDensity {
  double z0 = 0.0;  // z of the first window node
  double dz = 0.0;
  std::size_t n = 0;
  std::vector<cplx> rho;     // row-major, rho[a * n + b] = rho_red(z_a, z_b)
  double full_trace = 0.0;   // trace over the whole z grid
  double time = 0.0;
  /// Indices wrap modulo n (set for the refined full-grid window).
  bool periodic = false;
  /// Nodes [0, n_rows) lie inside the box; the rest is padding.
  std::size_t n_rows = 0;

  const cplx& operator()(std::size_t a, std::size_t b) const { return rho[a * n + b]; }
  double z(std::size_t a) const { return z0 + static_cast<double>(a) * dz; }
  double trace() const;
  /// Norm left outside the window (bounds the zero-padding error).
  double excluded_norm() const { return full_trace - trace(); }
};

/// Default memory budget for one reduced density matrix, in bytes.
inline constexpr std::size_t default_memory_budget = std::size_t{4} << 30;

/// Throws ComputeError(WindowTooLarge) when the n^2 matrix exceeds the budget.
ReducedDensity reduce_to_z(const WavefunctionGrid& wf, const ZWindow& window,
                           ReductionMode mode = ReductionMode::DensityMatrix,
                           ZetaSampling sampling = ZetaSampling::Refined,
                           std::size_t memory_budget = default_memory_budget, int threads = 1);

/// Builds a reduced density directly from a one-dimensional amplitude sampled
/// on a uniform z grid (used by analytic checks).
ReducedDensity pure_reduced_density(const std::vector<cplx>& amplitude, double z0, double dz);

/// Real Wigner function on (z, p_z). p_k = pi k / (n_zeta dz) for
/// k = -n_zeta/2 .. n_zeta/2 - 1, with dz the spacing of the reduced density
/// and n_zeta its length rounded up to an even number, so that z +- zeta
/// always land on its nodes. Rows cover the in-box nodes only.
struct PhaseSpaceMap {
  double z0 = 0.0;
  double dz = 0.0;
  std::size_t n_z = 0;
  double p0 = 0.0;
  double dp = 0.0;
  std::size_t n_p = 0;
  std::vector<double> w;  // row-major, w[a * n_p + k]
  double time = 0.0;
  double max_imag_residue = 0.0;
  double excluded_norm = 0.0;

  double operator()(std::size_t a, std::size_t k) const { return w[a * n_p + k]; }
  double z(std::size_t a) const { return z0 + static_cast<double>(a) * dz; }
  double p(std::size_t k) const { return p0 + static_cast<double>(k) * dp; }
};

/// W(z, p) = (1/pi) sum_m dz exp(2 i p m dz) rho_red(z - m dz, z + m dz),
/// evaluated per z row with one FFT; zero outside a non-periodic window. Throws ComputeError(ImagResidue) if the
/// imaginary part exceeds 1e-8 anywhere.
PhaseSpaceMap wigner(const ReducedDensity& rd, int threads = 1);

struct MomentProfiles {
  double z0 = 0.0;
  double dz = 0.0;
  std::size_t n_z = 0;
  double time = 0.0;
  /// moments[n][a] = sum_k p_k^n W(z_a, p_k) dp. For odd n the unpaired
  /// -p_max bin counts as p = 0 (mean of its two aliases +-p_max).
  std::vector<std::vector<double>> moments;
  std::vector<double> qmf;    // P1 / P0 where mask is set, 0 elsewhere
  std::vector<bool> mask;     // P0 >= p0_floor
  double p0_floor = 1e-8;

  const std::vector<double>& p0() const { return moments.at(0); }
  double z(std::size_t a) const { return z0 + static_cast<double>(a) * dz; }
  /// Linear interpolation of the QMF at z. Empty when either neighbouring
  /// node is masked out or z lies outside the profile.
  std::optional<double> qmf_at(double z) const;
};

MomentProfiles moments(const PhaseSpaceMap& ps, int n_max = 1, double p0_floor = 1e-8);

/// Probability-current velocity along z computed straight from the 3D field:
///   v(z) = Im(sum_j conj(Psi) d_z Psi w_j) / sum_j |Psi|^2 w_j
/// with a spectral z derivative (zero-padded FFT, Nyquist mode dropped).
/// Returns (density, current) on the window nodes.
std::pair<std::vector<double>, std::vector<double>> density_and_current_z(
    const WavefunctionGrid& wf, const ZWindow& window);

/// Mean rho-velocity of the probability current at one z node:
///   sum_j Im(conj(Psi) d_rho Psi) w_j / sum_j |Psi|^2 w_j
/// with a centred difference on the half-offset rho nodes.
double mean_current_rho(const WavefunctionGrid& wf, std::size_t z_index);

/// A polyline in (z, rho).
using Polyline = std::vector<std::pair<double, double>>;

/// Contour {V(z, rho) + field * z = level} traced by marching squares over the
/// grid nodes; `field` is q E. Throws ComputeError(EmptyRegion) when the level
/// is never crossed.
std::vector<Polyline> tunnel_region(const Potential& potential, double field, double level,
                                    const CylGrid& grid);
std::vector<Polyline> tunnel_region(const Potential& potential, const LaserPulse& pulse, double t,
                                    double level, const CylGrid& grid);

}  // namespace tunnelexit
