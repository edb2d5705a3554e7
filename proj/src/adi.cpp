#include "tunnelexit/adi.hpp"

#include "tunnelexit/error.hpp"
#include "tunnelexit/parallel.hpp"

namespace tunnelexit {

AdiSplitter::AdiSplitter(const CylGrid& grid, std::vector<double> potential, int threads)
    : grid_(grid), potential_(std::move(potential)), threads_(threads) {
  if (potential_.size() != grid_.size())
    throw ComputeError(ErrorKind::InvalidArgument, "potential size does not match grid");
  const double h = grid_.drho();
  rho_lower_.resize(grid_.n_rho);
  rho_upper_.resize(grid_.n_rho);
  for (std::size_t j = 0; j < grid_.n_rho; ++j) {
    const double jj = static_cast<double>(j);
    // -(1/2) (1/rho_j h^2) [rho_{j+1/2}(f_{j+1} - f_j) - rho_{j-1/2}(f_j - f_{j-1})]
    rho_lower_[j] = -0.5 * jj / ((jj + 0.5) * h * h);
    rho_upper_[j] = -0.5 * (jj + 1.0) / ((jj + 0.5) * h * h);
  }
  work_.resize(grid_.size());
  cprime_.resize(grid_.size());
}

void AdiSplitter::step(std::vector<cplx>& psi, cplx h, double field) const {
  sweep_z(psi, 0.5 * h, field);
  sweep_rho(psi, h, field);
  sweep_z(psi, 0.5 * h, field);
}

void AdiSplitter::sweep_z(std::vector<cplx>& psi, cplx h, double field) const {
  const std::size_t nz = grid_.n_z;
  const std::size_t nr = grid_.n_rho;
  const double dz = grid_.dz();
  const double t_diag = 1.0 / (dz * dz);
  const double t_off = -0.5 / (dz * dz);
  const cplx s = 0.5 * h;
  const cplx off_lhs = s * t_off;

  parallel_for(nr, threads_, [&](std::size_t j0, std::size_t j1) {
    cplx* d = work_.data();
    cplx* cp = cprime_.data();
    // Right-hand side (1 - s H_z) psi.
    for (std::size_t i = 0; i < nz; ++i) {
      const double zi = grid_.z(i);
      for (std::size_t j = j0; j < j1; ++j) {
        const std::size_t k = i * nr + j;
        const double diag = t_diag + 0.5 * (potential_[k] + field * zi);
        cplx neighbours = 0.0;
        if (i > 0) neighbours += psi[k - nr];
        if (i + 1 < nz) neighbours += psi[k + nr];
        d[k] = psi[k] - s * (diag * psi[k] + t_off * neighbours);
      }
    }
    // Forward elimination, batched over the columns of this chunk.
    for (std::size_t i = 0; i < nz; ++i) {
      const double zi = grid_.z(i);
      for (std::size_t j = j0; j < j1; ++j) {
        const std::size_t k = i * nr + j;
        const cplx b = 1.0 + s * (t_diag + 0.5 * (potential_[k] + field * zi));
        const cplx pivot = (i == 0) ? b : b - off_lhs * cp[k - nr];
        if (pivot == 0.0) throw ComputeError(ErrorKind::SolverSingular, "zero pivot in z sweep");
        cp[k] = off_lhs / pivot;
        d[k] = (i == 0) ? d[k] / pivot : (d[k] - off_lhs * d[k - nr]) / pivot;
      }
    }
    for (std::size_t j = j0; j < j1; ++j) psi[(nz - 1) * nr + j] = d[(nz - 1) * nr + j];
    for (std::size_t i = nz - 1; i-- > 0;) {
      for (std::size_t j = j0; j < j1; ++j) {
        const std::size_t k = i * nr + j;
        psi[k] = d[k] - cp[k] * psi[k + nr];
      }
    }
  });
}

void AdiSplitter::sweep_rho(std::vector<cplx>& psi, cplx h, double field) const {
  const std::size_t nz = grid_.n_z;
  const std::size_t nr = grid_.n_rho;
  const double drho = grid_.drho();
  const double t_diag = 1.0 / (drho * drho);
  const cplx s = 0.5 * h;

  parallel_for(nz, threads_, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      const double zi = grid_.z(i);
      cplx* row = psi.data() + i * nr;
      cplx* d = work_.data() + i * nr;
      cplx* cp = cprime_.data() + i * nr;
      for (std::size_t j = 0; j < nr; ++j) {
        const double diag = t_diag + 0.5 * (potential_[i * nr + j] + field * zi);
        cplx hv = diag * row[j];
        if (j > 0) hv += rho_lower_[j] * row[j - 1];
        if (j + 1 < nr) hv += rho_upper_[j] * row[j + 1];
        d[j] = row[j] - s * hv;
      }
      for (std::size_t j = 0; j < nr; ++j) {
        const cplx b = 1.0 + s * (t_diag + 0.5 * (potential_[i * nr + j] + field * zi));
        const cplx a = s * rho_lower_[j];
        const cplx c = s * rho_upper_[j];
        const cplx pivot = (j == 0) ? b : b - a * cp[j - 1];
        if (pivot == 0.0)
          throw ComputeError(ErrorKind::SolverSingular, "zero pivot in rho sweep");
        cp[j] = c / pivot;
        d[j] = (j == 0) ? d[j] / pivot : (d[j] - a * d[j - 1]) / pivot;
      }
      row[nr - 1] = d[nr - 1];
      for (std::size_t j = nr - 1; j-- > 0;) row[j] = d[j] - cp[j] * row[j + 1];
    }
  });
}

}  // namespace tunnelexit
