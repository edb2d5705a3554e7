#include "tunnelexit/atomic.hpp"

#include <cmath>

#include "tunnelexit/adi.hpp"
#include "tunnelexit/error.hpp"

namespace tunnelexit {

double Potential::operator()(double z, double rho) const {
  double r2 = z * z + rho * rho;
  if (kind == PotentialKind::SoftCore) r2 += softening * softening;
  return -charge / std::sqrt(r2);
}

double Potential::dz(double z, double rho) const {
  double r2 = z * z + rho * rho;
  if (kind == PotentialKind::SoftCore) r2 += softening * softening;
  return charge * z / (r2 * std::sqrt(r2));
}

std::vector<std::string> validate(const Potential& p) {
  std::vector<std::string> issues;
  if (!(p.charge > 0.0)) issues.emplace_back("potential.Z: must be > 0");
  if (p.kind == PotentialKind::SoftCore && !(p.softening > 0.0))
    issues.emplace_back("potential.a: must be > 0 for soft_core");
  return issues;
}

std::vector<double> evaluate_potential(const Potential& p, const CylGrid& grid) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < grid.n_z; ++i)
    for (std::size_t j = 0; j < grid.n_rho; ++j) v[grid.index(i, j)] = p(grid.z(i), grid.rho(j));
  return v;
}

std::vector<cplx> apply_hamiltonian(const WavefunctionGrid& wf, const std::vector<double>& potential,
                                    double field) {
  const auto& g = wf.grid;
  const std::size_t nz = g.n_z;
  const std::size_t nr = g.n_rho;
  const double dz2 = g.dz() * g.dz();
  const double h2 = g.drho() * g.drho();
  std::vector<cplx> out(g.size());
  for (std::size_t i = 0; i < nz; ++i) {
    const double zi = g.z(i);
    for (std::size_t j = 0; j < nr; ++j) {
      const std::size_t k = g.index(i, j);
      const cplx f = wf.psi[k];
      const cplx up = (i + 1 < nz) ? wf.psi[k + nr] : cplx{};
      const cplx down = (i > 0) ? wf.psi[k - nr] : cplx{};
      const cplx tz = -0.5 * (up - 2.0 * f + down) / dz2;

      const double jj = static_cast<double>(j);
      const cplx outer = (j + 1 < nr) ? wf.psi[k + 1] : cplx{};
      const cplx inner_v = (j > 0) ? wf.psi[k - 1] : cplx{};
      const cplx trho =
          -0.5 * ((jj + 1.0) * (outer - f) - jj * (f - inner_v)) / ((jj + 0.5) * h2);

      out[k] = tz + trho + (potential[k] + field * zi) * f;
    }
  }
  return out;
}

double energy_expectation(const WavefunctionGrid& wf, const std::vector<double>& potential) {
  const auto hpsi = apply_hamiltonian(wf, potential, 0.0);
  const auto& g = wf.grid;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < g.n_z; ++i) {
    for (std::size_t j = 0; j < g.n_rho; ++j) {
      const std::size_t k = g.index(i, j);
      num += (std::conj(wf.psi[k]) * hpsi[k]).real() * g.weight(j);
      den += std::norm(wf.psi[k]) * g.weight(j);
    }
  }
  return num / den;
}

double energy_expectation(const WavefunctionGrid& wf, const Potential& p) {
  return energy_expectation(wf, evaluate_potential(p, wf.grid));
}

GroundStateResult ground_state(const Potential& p, const CylGrid& grid,
                               const GroundStateOptions& options) {
  if (!(options.dt_imag > 0.0))
    throw ComputeError(ErrorKind::InvalidArgument, "dt_imag must be > 0");
  if (!(options.tol > 0.0)) throw ComputeError(ErrorKind::InvalidArgument, "tol must be > 0");

  auto potential = evaluate_potential(p, grid);
  AdiSplitter splitter(grid, potential, options.threads);

  WavefunctionGrid wf(grid);
  const double w2 = options.seed_width * options.seed_width;
  for (std::size_t i = 0; i < grid.n_z; ++i) {
    for (std::size_t j = 0; j < grid.n_rho; ++j) {
      const double r2 = grid.z(i) * grid.z(i) + grid.rho(j) * grid.rho(j);
      wf.at(i, j) = std::exp(-0.5 * r2 / w2);
    }
  }
  normalize(wf);

  double energy = energy_expectation(wf, potential);
  if (options.energy_history) options.energy_history->push_back(energy);
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    splitter.step(wf.psi, cplx{options.dt_imag, 0.0}, 0.0);
    normalize(wf);
    const double next = energy_expectation(wf, potential);
    if (options.energy_history) options.energy_history->push_back(next);
    if (!std::isfinite(next))
      throw ComputeError(ErrorKind::NonConvergence, "energy became non-finite during relaxation");
    const double change = std::abs(next - energy);
    energy = next;
    if (change < options.tol) return {std::move(wf), energy, it};
  }
  throw ComputeError(ErrorKind::NonConvergence,
                     "imaginary-time relaxation did not reach tol within the iteration cap");
}

}  // namespace tunnelexit
