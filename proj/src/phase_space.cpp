#include "tunnelexit/phase_space.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>

#include "tunnelexit/error.hpp"
#include "tunnelexit/parallel.hpp"

namespace tunnelexit {

namespace {

constexpr double kImagResidueLimit = 1e-8;

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

FftwBuffer make_buffer(std::size_t n) {
  return FftwBuffer(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
}

// Owns a 1D complex FFTW plan made with FFTW_ESTIMATE, which is deterministic
// from run to run.
class FftPlan {
 public:
  FftPlan(std::size_t n, int sign) : n_(n) {
    auto in = make_buffer(n);
    auto out = make_buffer(n);
    plan_ = fftw_plan_dft_1d(static_cast<int>(n), in.get(), out.get(), sign, FFTW_ESTIMATE);
  }
  ~FftPlan() { fftw_destroy_plan(plan_); }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  // New-array execution; thread-safe for distinct buffers from make_buffer.
  void run(fftw_complex* in, fftw_complex* out) const { fftw_execute_dft(plan_, in, out); }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  fftw_plan plan_;
};

}  // namespace

ZWindow full_window(const CylGrid& grid) { return {0, grid.n_z - 1}; }

std::vector<ZWindow> tile_windows(const CylGrid& grid, double width, double overlap) {
  const auto n_w = static_cast<std::size_t>(std::llround(width / grid.dz())) + 1;
  if (n_w >= grid.n_z) return {full_window(grid)};
  const auto shared = static_cast<std::size_t>(std::llround(overlap * static_cast<double>(n_w)));
  const std::size_t stride = std::max<std::size_t>(1, n_w - shared);
  std::vector<ZWindow> windows;
  for (std::size_t first = 0;; first += stride) {
    if (first + n_w >= grid.n_z) {
      windows.push_back({grid.n_z - n_w, grid.n_z - 1});
      break;
    }
    windows.push_back({first, first + n_w - 1});
  }
  return windows;
}

double ReducedDensity::trace() const {
  double t = 0.0;
  for (std::size_t a = 0; a < n; ++a) t += rho[a * n + a].real() * dz;
  return t;
}

namespace {

// Band-limited refinement of n_col columns stored z-major (data[i * n_col + c],
// i < nz). Each column is zero-padded to 2 nz, transformed, and resampled on
// 4 nz points at half the spacing with the Nyquist mode split evenly, so even
// output nodes reproduce the input. Output layout matches the input.
std::vector<cplx> refine_columns(const cplx* data, std::size_t nz, std::size_t n_col, int threads) {
  const std::size_t n_fft = 2 * nz;
  const std::size_t n_fine = 2 * n_fft;
  const FftPlan forward(n_fft, FFTW_FORWARD);
  const FftPlan backward(n_fine, FFTW_BACKWARD);
  std::vector<cplx> out(n_fine * n_col);
  const double scale = 1.0 / static_cast<double>(n_fft);
  parallel_for(n_col, threads, [&](std::size_t c0, std::size_t c1) {
    auto in = make_buffer(n_fft);
    auto spec = make_buffer(n_fft);
    auto big = make_buffer(n_fine);
    auto res = make_buffer(n_fine);
    for (std::size_t c = c0; c < c1; ++c) {
      for (std::size_t q = 0; q < n_fft; ++q) {
        const cplx v = q < nz ? data[q * n_col + c] : cplx{};
        in[q][0] = v.real();
        in[q][1] = v.imag();
      }
      forward.run(in.get(), spec.get());
      for (std::size_t q = 0; q < n_fine; ++q) big[q][0] = big[q][1] = 0.0;
      const std::size_t half = n_fft / 2;
      for (std::size_t q = 0; q < n_fft; ++q) {
        const double re = spec[q][0] * scale;
        const double im = spec[q][1] * scale;
        if (q < half) {
          big[q][0] = re;
          big[q][1] = im;
        } else if (q > half) {
          big[q + n_fft][0] = re;
          big[q + n_fft][1] = im;
        } else {
          big[half][0] = big[n_fine - half][0] = 0.5 * re;
          big[half][1] = big[n_fine - half][1] = 0.5 * im;
        }
      }
      backward.run(big.get(), res.get());
      for (std::size_t f = 0; f < n_fine; ++f) out[f * n_col + c] = {res[f][0], res[f][1]};
    }
  });
  // Even nodes are the input samples up to rounding; pin them exactly.
  for (std::size_t i = 0; i < nz; ++i)
    for (std::size_t c = 0; c < n_col; ++c) out[2 * i * n_col + c] = data[i * n_col + c];
  return out;
}

// rho[a * n + b] = sum_c w_c rows[a][c] conj(rows[b][c]) over n rows of n_col
// entries, Hermitian by construction.
void correlate(const cplx* rows, std::size_t n, std::size_t n_col, const std::vector<double>& w,
               std::vector<cplx>& rho, int threads) {
  // Row a is paired with row n - 1 - a to balance the triangular work.
  auto do_row = [&](std::size_t a) {
    const cplx* ra = rows + a * n_col;
    for (std::size_t b = a; b < n; ++b) {
      const cplx* rb = rows + b * n_col;
      cplx s{};
      for (std::size_t c = 0; c < n_col; ++c) s += w[c] * ra[c] * std::conj(rb[c]);
      rho[a * n + b] = s;
      rho[b * n + a] = std::conj(s);
    }
    rho[a * n + a] = rho[a * n + a].real();
  };
  parallel_for((n + 1) / 2, threads, [&](std::size_t p0, std::size_t p1) {
    for (std::size_t p = p0; p < p1; ++p) {
      do_row(p);
      if (n - 1 - p != p) do_row(n - 1 - p);
    }
  });
}

}  // namespace

ReducedDensity reduce_to_z(const WavefunctionGrid& wf, const ZWindow& window, ReductionMode mode,
                           ZetaSampling sampling, std::size_t memory_budget, int threads) {
  const auto& g = wf.grid;
  if (window.last >= g.n_z || window.first > window.last)
    throw ComputeError(ErrorKind::InvalidArgument, "window outside the z grid");

  const bool refined = sampling == ZetaSampling::Refined;
  const bool periodic = refined && window.first == 0 && window.last == g.n_z - 1;
  std::size_t n = window.size();
  if (refined) n = periodic ? 4 * g.n_z : 2 * n - 1;
  if (n > memory_budget / sizeof(cplx) / n)
    throw ComputeError(ErrorKind::WindowTooLarge, "reduced density matrix exceeds memory budget");

  ReducedDensity rd;
  rd.z0 = g.z(window.first);
  rd.dz = refined ? 0.5 * g.dz() : g.dz();
  rd.n = n;
  rd.time = wf.time;
  rd.periodic = periodic;
  rd.n_rows = periodic ? 2 * g.n_z - 1 : n;
  rd.rho.assign(n * n, cplx{});
  // Refined node f sits at fine index first_fine + f.
  const std::size_t first_fine = refined ? 2 * window.first : window.first;

  std::vector<double> wj(g.n_rho);
  for (std::size_t j = 0; j < g.n_rho; ++j) wj[j] = 2.0 * std::numbers::pi * g.rho(j) * g.drho();

  if (mode == ReductionMode::DensityMatrix) {
    double full = 0.0;
    for (std::size_t i = 0; i < g.n_z; ++i)
      for (std::size_t j = 0; j < g.n_rho; ++j) full += wj[j] * std::norm(wf.at(i, j));
    rd.full_trace = full * g.dz();
    if (refined) {
      const auto fine = refine_columns(wf.psi.data(), g.n_z, g.n_rho, threads);
      correlate(fine.data() + first_fine * g.n_rho, n, g.n_rho, wj, rd.rho, threads);
    } else {
      correlate(wf.psi.data() + first_fine * g.n_rho, n, g.n_rho, wj, rd.rho, threads);
    }
    return rd;
  }

  std::vector<cplx> phi(g.n_z);
  double full = 0.0;
  for (std::size_t i = 0; i < g.n_z; ++i) {
    cplx s{};
    for (std::size_t j = 0; j < g.n_rho; ++j) s += wj[j] * wf.at(i, j);
    phi[i] = s;
    full += std::norm(s) * g.dz();
  }
  if (!(full > 0.0)) throw ComputeError(ErrorKind::InvalidArgument, "amplitude integrates to zero");
  const double scale = 1.0 / std::sqrt(full);
  for (auto& v : phi) v *= scale;
  const std::vector<double> unit{1.0};
  if (refined) {
    const auto fine = refine_columns(phi.data(), g.n_z, 1, 1);
    correlate(fine.data() + first_fine, n, 1, unit, rd.rho, threads);
  } else {
    correlate(phi.data() + first_fine, n, 1, unit, rd.rho, threads);
  }
  rd.full_trace = 1.0;
  return rd;
}

ReducedDensity pure_reduced_density(const std::vector<cplx>& amplitude, double z0, double dz) {
  ReducedDensity rd;
  rd.z0 = z0;
  rd.dz = dz;
  rd.n = amplitude.size();
  rd.rho.assign(rd.n * rd.n, cplx{});
  for (std::size_t a = 0; a < rd.n; ++a) {
    for (std::size_t b = a; b < rd.n; ++b) {
      const cplx s = amplitude[a] * std::conj(amplitude[b]);
      rd.rho[a * rd.n + b] = s;
      rd.rho[b * rd.n + a] = std::conj(s);
    }
    rd.rho[a * rd.n + a] = rd.rho[a * rd.n + a].real();
  }
  rd.n_rows = rd.n;
  rd.full_trace = rd.trace();
  return rd;
}

PhaseSpaceMap wigner(const ReducedDensity& rd, int threads) {
  const std::size_t n = rd.n;
  const std::size_t rows = rd.n_rows == 0 ? n : rd.n_rows;
  const std::size_t nz = n + (n % 2);  // n_zeta
  const long half = static_cast<long>(nz / 2);
  const long ln = static_cast<long>(n);

  PhaseSpaceMap ps;
  ps.z0 = rd.z0;
  ps.dz = rd.dz;
  ps.n_z = rows;
  ps.n_p = nz;
  ps.dp = std::numbers::pi / (static_cast<double>(nz) * rd.dz);
  ps.p0 = -static_cast<double>(half) * ps.dp;
  ps.w.assign(rows * nz, 0.0);
  ps.time = rd.time;
  ps.excluded_norm = rd.excluded_norm();

  // Kernel exp(+2 i p_k m dz) = exp(+2 pi i k m / n_zeta): FFTW_BACKWARD.
  const FftPlan plan(nz, FFTW_BACKWARD);
  const double prefactor = rd.dz / std::numbers::pi;
  std::vector<double> residue(rows, 0.0);

  parallel_for(rows, threads, [&](std::size_t a0, std::size_t a1) {
    auto in = make_buffer(nz);
    auto out = make_buffer(nz);
    for (std::size_t a = a0; a < a1; ++a) {
      for (std::size_t q = 0; q < nz; ++q) in[q][0] = in[q][1] = 0.0;
      const long ai = static_cast<long>(a);
      for (long m = -half; m < half; ++m) {
        long lo = ai - m;
        long hi = ai + m;
        if (rd.periodic) {
          lo = ((lo % ln) + ln) % ln;
          hi = ((hi % ln) + ln) % ln;
        } else if (lo < 0 || hi < 0 || lo >= ln || hi >= ln) {
          continue;
        }
        const cplx g = rd(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi));
        const std::size_t slot = static_cast<std::size_t>((m + static_cast<long>(nz)) % static_cast<long>(nz));
        in[slot][0] = g.real();
        in[slot][1] = g.imag();
      }
      plan.run(in.get(), out.get());
      double worst = 0.0;
      for (long k = -half; k < half; ++k) {
        const std::size_t slot = static_cast<std::size_t>((k + static_cast<long>(nz)) % static_cast<long>(nz));
        const double re = out[slot][0] * prefactor;
        const double im = out[slot][1] * prefactor;
        worst = std::max(worst, std::abs(im));
        ps.w[a * nz + static_cast<std::size_t>(k + half)] = re;
      }
      residue[a] = worst;
    }
  });

  ps.max_imag_residue = rows ? *std::max_element(residue.begin(), residue.end()) : 0.0;
  if (ps.max_imag_residue > kImagResidueLimit) {
    std::ostringstream msg;
    msg << "Wigner transform imaginary residue " << ps.max_imag_residue << " exceeds "
        << kImagResidueLimit;
    throw ComputeError(ErrorKind::ImagResidue, msg.str());
  }
  return ps;
}

std::optional<double> MomentProfiles::qmf_at(double zq) const {
  if (n_z == 0) return std::nullopt;
  const double x = (zq - z0) / dz;
  if (x < 0.0 || x > static_cast<double>(n_z - 1)) return std::nullopt;
  const auto a = std::min(static_cast<std::size_t>(std::floor(x)), n_z - 1);
  const std::size_t b = std::min(a + 1, n_z - 1);
  if (!mask[a] || !mask[b]) return std::nullopt;
  const double f = x - static_cast<double>(a);
  return (1.0 - f) * qmf[a] + f * qmf[b];
}

MomentProfiles moments(const PhaseSpaceMap& ps, int n_max, double p0_floor) {
  if (n_max < 1) throw ComputeError(ErrorKind::InvalidArgument, "n_max must be >= 1");
  MomentProfiles mp;
  mp.z0 = ps.z0;
  mp.dz = ps.dz;
  mp.n_z = ps.n_z;
  mp.time = ps.time;
  mp.p0_floor = p0_floor;
  mp.moments.assign(static_cast<std::size_t>(n_max) + 1, std::vector<double>(ps.n_z, 0.0));
  for (std::size_t a = 0; a < ps.n_z; ++a) {
    for (int order = 0; order <= n_max; ++order) {
      double s = 0.0;
      for (std::size_t k = 0; k < ps.n_p; ++k) {
        const bool nyquist = (k == 0);
        if (nyquist && order % 2 == 1) continue;
        s += std::pow(ps.p(k), order) * ps(a, k);
      }
      mp.moments[static_cast<std::size_t>(order)][a] = s * ps.dp;
    }
  }
  mp.qmf.assign(ps.n_z, 0.0);
  mp.mask.assign(ps.n_z, false);
  for (std::size_t a = 0; a < ps.n_z; ++a) {
    const double p0 = mp.moments[0][a];
    if (p0 >= p0_floor) {
      mp.mask[a] = true;
      mp.qmf[a] = mp.moments[1][a] / p0;
    }
  }
  return mp;
}

std::pair<std::vector<double>, std::vector<double>> density_and_current_z(
    const WavefunctionGrid& wf, const ZWindow& window) {
  const auto& g = wf.grid;
  const std::size_t nz = g.n_z;
  const std::size_t n_fft = 2 * nz;
  const double dz = g.dz();
  const FftPlan forward(n_fft, FFTW_FORWARD);
  const FftPlan backward(n_fft, FFTW_BACKWARD);
  auto in = make_buffer(n_fft);
  auto spec = make_buffer(n_fft);
  auto deriv = make_buffer(n_fft);

  std::vector<double> density(window.size(), 0.0);
  std::vector<double> current(window.size(), 0.0);
  const double two_pi_over_l = 2.0 * std::numbers::pi / (static_cast<double>(n_fft) * dz);

  for (std::size_t j = 0; j < g.n_rho; ++j) {
    const double wj = 2.0 * std::numbers::pi * g.rho(j) * g.drho();
    for (std::size_t q = 0; q < n_fft; ++q) {
      const cplx v = q < nz ? wf.at(q, j) : cplx{};
      in[q][0] = v.real();
      in[q][1] = v.imag();
    }
    forward.run(in.get(), spec.get());
    for (std::size_t q = 0; q < n_fft; ++q) {
      // i kappa multiplication; the Nyquist mode q = n_fft/2 is dropped.
      const long kq = q < n_fft / 2 ? static_cast<long>(q) : static_cast<long>(q) - static_cast<long>(n_fft);
      const double kappa = (q == n_fft / 2) ? 0.0 : two_pi_over_l * static_cast<double>(kq);
      const double re = spec[q][0];
      const double im = spec[q][1];
      spec[q][0] = -kappa * im / static_cast<double>(n_fft);
      spec[q][1] = kappa * re / static_cast<double>(n_fft);
    }
    backward.run(spec.get(), deriv.get());
    for (std::size_t a = 0; a < window.size(); ++a) {
      const cplx psi = wf.at(window.first + a, j);
      const cplx d{deriv[window.first + a][0], deriv[window.first + a][1]};
      density[a] += wj * std::norm(psi);
      current[a] += wj * (std::conj(psi) * d).imag();
    }
  }
  return {std::move(density), std::move(current)};
}

double mean_current_rho(const WavefunctionGrid& wf, std::size_t i) {
  const auto& g = wf.grid;
  const double h = g.drho();
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < g.n_rho; ++j) {
    const cplx f = wf.at(i, j);
    // Mirror across rho = 0 (even in rho for m = 0) and Dirichlet outside.
    const cplx below = j > 0 ? wf.at(i, j - 1) : f;
    const cplx above = j + 1 < g.n_rho ? wf.at(i, j + 1) : cplx{};
    const cplx d = (above - below) / (2.0 * h);
    const double w = 2.0 * std::numbers::pi * g.rho(j) * h;
    num += w * (std::conj(f) * d).imag();
    den += w * std::norm(f);
  }
  return den > 0.0 ? num / den : 0.0;
}

namespace {

struct Segment {
  std::size_t edge_a;
  std::size_t edge_b;
};

}  // namespace

std::vector<Polyline> tunnel_region(const Potential& potential, double field, double level,
                                    const CylGrid& grid) {
  const std::size_t nz = grid.n_z;
  const std::size_t nr = grid.n_rho;
  std::vector<double> f(grid.size());
  bool any_pos = false;
  bool any_neg = false;
  for (std::size_t i = 0; i < nz; ++i) {
    for (std::size_t j = 0; j < nr; ++j) {
      const double v = potential(grid.z(i), grid.rho(j)) + field * grid.z(i) - level;
      f[grid.index(i, j)] = v;
      (v > 0.0 ? any_pos : any_neg) = true;
    }
  }
  if (!any_pos || !any_neg)
    throw ComputeError(ErrorKind::EmptyRegion, "level is not crossed anywhere on the grid");

  // Edge ids: 2*(i*nr+j) is the z-directed edge (i,j)-(i+1,j); +1 is the
  // rho-directed edge (i,j)-(i,j+1).
  auto h_edge = [nr](std::size_t i, std::size_t j) { return 2 * (i * nr + j); };
  auto v_edge = [nr](std::size_t i, std::size_t j) { return 2 * (i * nr + j) + 1; };
  auto positive = [&](std::size_t i, std::size_t j) { return f[grid.index(i, j)] > 0.0; };

  std::vector<Segment> segments;
  for (std::size_t i = 0; i + 1 < nz; ++i) {
    for (std::size_t j = 0; j + 1 < nr; ++j) {
      const bool c0 = positive(i, j), c1 = positive(i + 1, j);
      const bool c2 = positive(i + 1, j + 1), c3 = positive(i, j + 1);
      const std::size_t e0 = h_edge(i, j), e1 = v_edge(i + 1, j);
      const std::size_t e2 = h_edge(i, j + 1), e3 = v_edge(i, j);
      std::vector<std::size_t> crossed;
      if (c0 != c1) crossed.push_back(e0);
      if (c1 != c2) crossed.push_back(e1);
      if (c3 != c2) crossed.push_back(e2);
      if (c0 != c3) crossed.push_back(e3);
      if (crossed.size() == 2) {
        segments.push_back({crossed[0], crossed[1]});
      } else if (crossed.size() == 4) {
        const double centre = 0.25 * (f[grid.index(i, j)] + f[grid.index(i + 1, j)] +
                                      f[grid.index(i + 1, j + 1)] + f[grid.index(i, j + 1)]);
        if ((centre > 0.0) == c0) {
          segments.push_back({e0, e1});
          segments.push_back({e2, e3});
        } else {
          segments.push_back({e0, e3});
          segments.push_back({e1, e2});
        }
      }
    }
  }

  auto crossing = [&](std::size_t edge) {
    const std::size_t cell = edge / 2;
    const std::size_t i = cell / nr;
    const std::size_t j = cell % nr;
    const std::size_t i2 = (edge % 2 == 0) ? i + 1 : i;
    const std::size_t j2 = (edge % 2 == 0) ? j : j + 1;
    const double fa = f[grid.index(i, j)];
    const double fb = f[grid.index(i2, j2)];
    const double s = fa / (fa - fb);
    return std::pair{grid.z(i) + s * (grid.z(i2) - grid.z(i)),
                     grid.rho(j) + s * (grid.rho(j2) - grid.rho(j))};
  };

  std::map<std::size_t, std::vector<std::size_t>> by_edge;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    by_edge[segments[s].edge_a].push_back(s);
    by_edge[segments[s].edge_b].push_back(s);
  }
  std::vector<bool> used(segments.size(), false);
  std::vector<Polyline> lines;

  auto trace_from = [&](std::size_t start_edge, std::size_t start_seg) {
    Polyline line{crossing(start_edge)};
    std::size_t edge = start_edge;
    std::size_t seg = start_seg;
    while (!used[seg]) {
      used[seg] = true;
      edge = segments[seg].edge_a == edge ? segments[seg].edge_b : segments[seg].edge_a;
      line.push_back(crossing(edge));
      const auto& next = by_edge[edge];
      auto it = std::find_if(next.begin(), next.end(), [&](std::size_t s) { return !used[s]; });
      if (it == next.end()) break;
      seg = *it;
    }
    lines.push_back(std::move(line));
  };

  // Open lines start at edges with a single segment, closed loops afterwards.
  for (const auto& [edge, segs] : by_edge)
    if (segs.size() == 1 && !used[segs[0]]) trace_from(edge, segs[0]);
  for (std::size_t s = 0; s < segments.size(); ++s)
    if (!used[s]) trace_from(segments[s].edge_a, s);
  return lines;
}

std::vector<Polyline> tunnel_region(const Potential& potential, const LaserPulse& pulse, double t,
                                    double level, const CylGrid& grid) {
  return tunnel_region(potential, pulse.constants.q_e * electric_field(pulse, t), level, grid);
}

}  // namespace tunnelexit
