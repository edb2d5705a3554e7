#include "tunnelexit/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tunnelexit/error.hpp"

namespace tunnelexit {

std::vector<std::string> validate(const PropagatorConfig& config, const CylGrid& grid) {
  std::vector<std::string> issues;
  if (!(config.dt > 0.0)) issues.emplace_back("propagation.dt: must be > 0");
  if (!(config.t_end >= 0.0)) issues.emplace_back("propagation.t_end: must be ≥ 0");
  if (!std::is_sorted(config.snapshot_times.begin(), config.snapshot_times.end()))
    issues.emplace_back("propagation.snapshot_times: must be sorted");
  for (double t : config.snapshot_times) {
    if (t < 0.0 || t > config.t_end) {
      issues.emplace_back("propagation.snapshot_times: every time must lie in [0, t_end]");
      break;
    }
  }
  if (config.scheme_order < 2) issues.emplace_back("propagation.scheme_order: must be ≥ 2");
  if (config.absorber.kind == AbsorberKind::Mask) {
    const double half_box = 0.5 * std::min(grid.z_max - grid.z_min, grid.rho_max);
    if (!(config.absorber.width > 0.0) || !(config.absorber.width < half_box))
      issues.emplace_back("propagation.absorber.width: must be > 0 and < half the box size");
    if (!(config.absorber.strength > 0.0))
      issues.emplace_back("propagation.absorber.strength: must be > 0");
  }
  return issues;
}

namespace {

double rim_factor(double depth, const Absorber& a) {
  if (depth <= 0.0) return 1.0;
  if (depth >= a.width) return 0.0;
  const double c = std::cos(0.5 * std::numbers::pi * std::min(depth / a.width, 1.0));
  return std::pow(std::max(c, 0.0), a.strength);
}

}  // namespace

std::vector<double> absorber_mask(const Absorber& absorber, const CylGrid& grid) {
  std::vector<double> mask(grid.size(), 1.0);
  if (absorber.kind == AbsorberKind::None) return mask;
  // Depth is measured so that the outermost node sits at depth == width.
  const double z_lo = grid.z_min + absorber.width;
  const double z_hi = grid.z_max - absorber.width;
  const double rho_hi = grid.rho(grid.n_rho - 1) - absorber.width;
  for (std::size_t i = 0; i < grid.n_z; ++i) {
    const double zi = grid.z(i);
    const double fz = rim_factor(std::max(z_lo - zi, zi - z_hi), absorber);
    for (std::size_t j = 0; j < grid.n_rho; ++j)
      mask[grid.index(i, j)] = fz * rim_factor(grid.rho(j) - rho_hi, absorber);
  }
  return mask;
}

Propagator::Propagator(const CylGrid& grid, const Potential& potential, const Absorber& absorber,
                       int threads)
    : splitter_(grid, evaluate_potential(potential, grid), threads),
      mask_(absorber_mask(absorber, grid)),
      has_mask_(absorber.kind != AbsorberKind::None) {}

void Propagator::step_with_field(WavefunctionGrid& wf, double dt, double field) const {
  if (!(dt > 0.0)) throw ComputeError(ErrorKind::InvalidArgument, "step requires dt > 0");
  splitter_.step(wf.psi, cplx{0.0, dt}, field);
  if (has_mask_)
    for (std::size_t k = 0; k < wf.psi.size(); ++k) wf.psi[k] *= mask_[k];
  wf.time += dt;
}

void Propagator::step(WavefunctionGrid& wf, double dt, const LaserPulse& pulse) const {
  const double field = pulse.constants.q_e * electric_field(pulse, wf.time + 0.5 * dt);
  step_with_field(wf, dt, field);
}

WavefunctionGrid step(const WavefunctionGrid& wf, double t, double dt, const LaserPulse& pulse,
                      const Potential& potential) {
  Propagator prop(wf.grid, potential);
  WavefunctionGrid out = wf;
  out.time = t;
  prop.step(out, dt, pulse);
  return out;
}

namespace {

void record(PropagationDiagnostics& d, const WavefunctionGrid& wf, const std::vector<double>& dvdz,
            double field) {
  const auto& g = wf.grid;
  double n = 0.0;
  double zm = 0.0;
  double fm = 0.0;
  for (std::size_t i = 0; i < g.n_z; ++i) {
    const double zi = g.z(i);
    for (std::size_t j = 0; j < g.n_rho; ++j) {
      const std::size_t k = g.index(i, j);
      const double p = std::norm(wf.psi[k]) * g.weight(j);
      n += p;
      zm += zi * p;
      fm += dvdz[k] * p;
    }
  }
  d.time.push_back(wf.time);
  d.norm.push_back(n);
  d.z_mean.push_back(n > 0.0 ? zm / n : 0.0);
  d.dvdz_mean.push_back(n > 0.0 ? fm / n : 0.0);
  d.field.push_back(field);
}

}  // namespace

void propagate(PropagationRun& run, const SnapshotSink& sink) {
  const auto& cfg = run.config;
  if (auto issues = validate(cfg, run.initial.grid); !issues.empty())
    throw ComputeError(ErrorKind::InvalidArgument, issues.front());
  const CylGrid& grid = run.initial.grid;
  const Propagator prop(grid, run.potential, cfg.absorber, cfg.threads);

  std::vector<double> dvdz(grid.size());
  for (std::size_t i = 0; i < grid.n_z; ++i)
    for (std::size_t j = 0; j < grid.n_rho; ++j)
      dvdz[grid.index(i, j)] = run.potential.dz(grid.z(i), grid.rho(j));

  const double t0 = run.initial.time;
  const long long n_steps = std::llround((cfg.t_end - t0) / cfg.dt);
  if (n_steps < 0) throw ComputeError(ErrorKind::InvalidArgument, "t_end precedes initial time");

  std::vector<std::pair<long long, double>> pending;
  for (double ts : cfg.snapshot_times) {
    const long long k = std::llround((ts - t0) / cfg.dt);
    if (k >= 0 && k <= n_steps) pending.emplace_back(k, ts);
  }
  std::size_t next = 0;

  WavefunctionGrid wf = run.initial;
  run.snapshots.clear();
  run.diagnostics = {};
  const double q = run.pulse.constants.q_e;

  auto take_snapshots = [&](long long k) {
    while (next < pending.size() && pending[next].first == k) {
      const double requested = pending[next].second;
      const bool keep = sink ? sink(requested, wf) : true;
      if (keep) run.snapshots.insert_or_assign(requested, wf);
      ++next;
    }
  };

  record(run.diagnostics, wf, dvdz, q * electric_field(run.pulse, wf.time));
  take_snapshots(0);
  for (long long k = 1; k <= n_steps; ++k) {
    prop.step(wf, cfg.dt, run.pulse);
    wf.time = t0 + static_cast<double>(k) * cfg.dt;
    record(run.diagnostics, wf, dvdz, q * electric_field(run.pulse, wf.time));
    if (!std::isfinite(run.diagnostics.norm.back())) {
      std::ostringstream msg;
      msg << "non-finite wavefunction first detected at t = " << wf.time;
      throw ComputeError(ErrorKind::Aborted, msg.str());
    }
    take_snapshots(k);
  }
}

}  // namespace tunnelexit
