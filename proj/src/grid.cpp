#include "tunnelexit/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tunnelexit/error.hpp"

namespace tunnelexit {

double CylGrid::weight(std::size_t j) const {
  return 2.0 * std::numbers::pi * rho(j) * drho() * dz();
}

std::size_t CylGrid::origin_index() const {
  return static_cast<std::size_t>(std::llround(-z_min / dz()));
}

std::size_t CylGrid::nearest_z_index(double zv) const {
  const double k = std::round((zv - z_min) / dz());
  if (k <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(k), n_z - 1);
}

std::vector<std::string> validate(const CylGrid& g) {
  std::vector<std::string> issues;
  if (g.n_z < 8) issues.emplace_back("grid.n_z: must be ≥ 8");
  if (g.n_rho < 8) issues.emplace_back("grid.n_rho: must be ≥ 8");
  if (!(g.z_max > g.z_min)) issues.emplace_back("grid.z_max: must exceed grid.z_min");
  if (!(g.rho_max > 0.0)) issues.emplace_back("grid.rho_max: must be > 0");
  if (g.n_z >= 2 && g.z_max > g.z_min) {
    if (!(g.z_min < 0.0 && g.z_max > 0.0)) {
      issues.emplace_back("grid.z_min: z range must contain 0 in its interior");
    } else {
      const double k = -g.z_min / g.dz();
      if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k))
        issues.emplace_back("grid.n_z: z = 0 must be a grid node (-z_min / dz must be an integer)");
    }
  }
  return issues;
}

WavefunctionGrid::WavefunctionGrid(const CylGrid& g, std::vector<cplx> values, double t)
    : grid(g), psi(std::move(values)), time(t) {
  if (psi.size() != grid.size())
    throw ComputeError(ErrorKind::InvalidArgument, "wavefunction size does not match grid");
}

double norm(const WavefunctionGrid& wf) {
  const auto& g = wf.grid;
  double total = 0.0;
  for (std::size_t i = 0; i < g.n_z; ++i)
    for (std::size_t j = 0; j < g.n_rho; ++j) total += std::norm(wf.at(i, j)) * g.weight(j);
  return total;
}

double normalize(WavefunctionGrid& wf) {
  const double n = norm(wf);
  if (!(n > 0.0)) throw ComputeError(ErrorKind::InvalidArgument, "cannot normalize a zero state");
  const double s = 1.0 / std::sqrt(n);
  for (auto& v : wf.psi) v *= s;
  return n;
}

cplx inner(const WavefunctionGrid& f, const WavefunctionGrid& g) {
  const auto& gr = f.grid;
  cplx total{0.0, 0.0};
  for (std::size_t i = 0; i < gr.n_z; ++i)
    for (std::size_t j = 0; j < gr.n_rho; ++j)
      total += std::conj(f.at(i, j)) * g.at(i, j) * gr.weight(j);
  return total;
}

double expectation_z(const WavefunctionGrid& wf) {
  const auto& g = wf.grid;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < g.n_z; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < g.n_rho; ++j) row += std::norm(wf.at(i, j)) * g.weight(j);
    num += g.z(i) * row;
    den += row;
  }
  return den > 0.0 ? num / den : 0.0;
}

bool all_finite(const WavefunctionGrid& wf) {
  return std::all_of(wf.psi.begin(), wf.psi.end(), [](const cplx& v) {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
  });
}

double probability_beyond(const WavefunctionGrid& wf, double z_cut, bool below) {
  const auto& g = wf.grid;
  double total = 0.0;
  for (std::size_t i = 0; i < g.n_z; ++i) {
    const double zi = g.z(i);
    if (below ? !(zi < z_cut) : !(zi > z_cut)) continue;
    for (std::size_t j = 0; j < g.n_rho; ++j) total += std::norm(wf.at(i, j)) * g.weight(j);
  }
  return total;
}

}  // namespace tunnelexit
