#include "tunnelexit/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "tunnelexit/classical.hpp"
#include "tunnelexit/error.hpp"
#include "tunnelexit/hash.hpp"
#include "tunnelexit/phase_space.hpp"
#include "tunnelexit/propagator.hpp"
#include "tunnelexit/reconstruction.hpp"

namespace tunnelexit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Command c) {
  switch (c) {
    case Command::GroundState: return "groundstate";
    case Command::Propagate: return "propagate";
    case Command::Wigner: return "wigner";
    case Command::Qmf: return "qmf";
    case Command::Trajectories: return "trajectories";
    case Command::Reconstruct: return "reconstruct";
    case Command::Pipeline: return "pipeline";
  }
  return "unknown";
}

struct Pipeline::Snapshot {
  std::optional<WavefunctionGrid> wf;  // empty once spilled
  fs::path file;
};

struct Pipeline::Analysis {
  double t = 0.0;
  MomentProfiles profile;
  std::optional<PhaseSpaceMap> map;  // compare times, single window only
};

namespace {

// Shortest text that reads back to the same double.
std::string exact(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double parse_exact(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ComputeError(ErrorKind::Io, "bad number '" + s + "'");
  return v;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 1) return {lo};
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

bool same_grid(const ArrayMeta& m, const CylGrid& g) {
  const ArrayMeta expect = grid_meta(g, ElementKind::Complex128);
  if (m.shape != expect.shape || m.axes.size() != 2) return false;
  for (std::size_t i = 0; i < 2; ++i)
    if (m.axes[i].start != expect.axes[i].start || m.axes[i].step != expect.axes[i].step) return false;
  return true;
}

double probability_in(const WavefunctionGrid& wf, const std::vector<double>& mask) {
  double total = 0.0;
  for (std::size_t i = 0; i < wf.grid.n_z; ++i)
    for (std::size_t j = 0; j < wf.grid.n_rho; ++j)
      if (mask[wf.grid.index(i, j)] < 1.0) total += std::norm(wf.at(i, j)) * wf.grid.weight(j);
  return total;
}

std::string mode_name(ReductionMode m) {
  return m == ReductionMode::DensityMatrix ? "density_matrix" : "amplitude_integrated";
}

}  // namespace

Pipeline::Pipeline(RunConfig config, std::optional<fs::path> stage_input)
    : cfg_(std::move(config)),
      stage_input_(std::move(stage_input)),
      writer_(cfg_.output.directory, config_digest(cfg_), cfg_.output.precision) {
  for (const char* s : {"groundstate", "propagate", "phase_space", "trajectories", "reconstruct"})
    stages_[s] = "not run";
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::manifest_path() const { return writer_.directory() / "manifest.json"; }

PipelineOutcome Pipeline::run(Command command, const std::vector<DetectorMomentum>* detector) {
  std::optional<PipelineOutcome> failure;
  stage_ = "setup";
  try {
    clear_previous_products();
    load_stage_input();
    writer_.set_stage("config");
    writer_.write_text("config.cfg", serialize_config(cfg_), "config");
    summary_["pulse"] = {{"t_peak", cfg_.pulse.t_peak()}, {"t_end", cfg_.pulse.t_end()}};

    switch (command) {
      case Command::GroundState: groundstate(); break;
      case Command::Propagate: propagate(); break;
      case Command::Wigner: phase_space(true, false); break;
      case Command::Qmf: phase_space(false, true); break;
      case Command::Trajectories: trajectories(); break;
      case Command::Reconstruct: reconstruct(detector); break;
      case Command::Pipeline:
        groundstate();
        propagate();
        phase_space(true, true);
        trajectories();
        reconstruct(detector);
        break;
    }
  } catch (const ComputeError& e) {
    failure = PipelineOutcome{3, stage_, std::string(to_string(e.kind())), e.what()};
  } catch (const std::exception& e) {
    failure = PipelineOutcome{3, stage_, "Internal", e.what()};
  }

  if (failure) {
    stages_[failure->failed_stage] = "failed";
    const json err = {{"stage", failure->failed_stage}, {"kind", failure->error_kind}, {"message", failure->message}};
    try {
      writer_.set_stage(failure->failed_stage);
      writer_.write_text("error.json", err.dump(2) + "\n", "json");
    } catch (const std::exception&) {
    }
  }
  write_manifest(command, failure);
  return failure.value_or(PipelineOutcome{});
}

// ---------------------------------------------------------------- plumbing

void Pipeline::clear_previous_products() {
  const fs::path old = manifest_path();
  if (!fs::exists(old)) return;
  if (stage_input_ && fs::exists(*stage_input_) && fs::equivalent(old, *stage_input_))
    throw ComputeError(ErrorKind::InvalidArgument,
                       "--stage-input manifest lives in the output directory; write to another directory");
  json m;
  try {
    std::ifstream in(old);
    m = json::parse(in);
  } catch (const std::exception&) {
    return;
  }
  for (const auto& p : m.value("products", json::array())) {
    std::error_code ec;
    fs::remove(writer_.directory() / p.value("file", std::string{}), ec);
  }
  fs::remove(old);
}

void Pipeline::load_stage_input() {
  if (!stage_input_) return;
  std::ifstream in(*stage_input_);
  if (!in) throw ComputeError(ErrorKind::Io, "cannot read stage input " + stage_input_->string());
  json m;
  try {
    m = json::parse(in);
  } catch (const std::exception& e) {
    throw ComputeError(ErrorKind::Io, "stage input is not valid JSON: " + std::string(e.what()));
  }
  const fs::path dir = stage_input_->parent_path();
  for (const auto& p : m.value("products", json::array()))
    input_products_[p.at("name").get<std::string>()].emplace_back(dir / p.at("file").get<std::string>(),
                                                                  p.at("sha256").get<std::string>());
  summary_["stage_input"] = {{"manifest", stage_input_->string()},
                             {"config_digest", m.value("config_digest", std::string{})}};
}

ArrayData Pipeline::read_input(const std::string& name) {
  const auto& files = input_products_.at(name);
  for (const auto& [path, sha] : files) {
    if (sha256_file(path) != sha)
      throw ComputeError(ErrorKind::Io, "checksum mismatch for stage input " + path.string());
    inputs_.push_back({{"name", name}, {"file", path.string()}, {"sha256", sha}});
  }
  return read_array(files.front().first);
}

void Pipeline::write_manifest(Command command, const std::optional<PipelineOutcome>& failure) {
  json m;
  m["format"] = "tunnelexit-manifest-1";
  m["command"] = to_string(command);
  m["status"] = failure ? "failed" : "ok";
  m["config_digest"] = writer_.config_digest();
  m["stages"] = stages_;
  m["inputs"] = inputs_;
  m["summary"] = summary_;
  if (failure)
    m["error"] = {{"stage", failure->failed_stage}, {"kind", failure->error_kind}, {"message", failure->message}};
  json products = json::array();
  for (const auto& r : writer_.records())
    products.push_back({{"name", r.name},
                        {"file", r.file},
                        {"kind", r.kind},
                        {"stage", r.stage},
                        {"bytes", r.bytes},
                        {"sha256", r.sha256}});
  m["products"] = products;
  std::ofstream out(manifest_path(), std::ios::trunc);
  out << m.dump(2) << "\n";
}

void Pipeline::skip(const std::string& stage) {
  writer_.set_stage(stage);
  writer_.write_text(stage + "_skipped.txt", "skipped: no field\n", "marker");
  stages_[stage] = "skipped: no field";
  summary_[stage] = {{"status", "skipped: no field"}};
}

double Pipeline::ionization_potential() const { return -ground_energy_.value(); }

Pipeline::ExitPosition Pipeline::exit_position(double t) const {
  const double field = cfg_.pulse.constants.q_e * electric_field(cfg_.pulse, t);
  try {
    return {exit_point(cfg_.potential, field, ionization_potential()), "outer_root"};
  } catch (const ComputeError& e) {
    if (e.kind() != ErrorKind::NoBarrier || field == 0.0 ||
        cfg_.trajectories.over_barrier == OverBarrierPolicy::Fail)
      throw;
    return {barrier_top(cfg_.potential, field), "barrier_top"};
  }
}

void Pipeline::keep_in_memory(double requested, const WavefunctionGrid& wf) {
  auto& s = *snapshots_.at(requested);
  const std::size_t bytes = wf.psi.size() * sizeof(cplx);
  if (snapshot_bytes_ + bytes <= memory_budget_bytes(cfg_) / 2) {
    s.wf = wf;
    snapshot_bytes_ += bytes;
  }
}

WavefunctionGrid Pipeline::snapshot(double requested) {
  auto& s = *snapshots_.at(requested);
  if (s.wf) return *s.wf;
  const ArrayData data = read_array(s.file);
  if (!same_grid(data.meta, cfg_.grid))
    throw ComputeError(ErrorKind::InvalidArgument, s.file.string() + ": snapshot grid differs from the config grid");
  return WavefunctionGrid(cfg_.grid, data.complex, parse_exact(data.meta.params.at("time")));
}

const Pipeline::Analysis& Pipeline::analysis_at(double t) const {
  for (const auto& [ts, a] : analyses_)
    if (std::abs(ts - t) <= 0.5 * cfg_.propagation.dt) return *a;
  throw ComputeError(ErrorKind::InvalidArgument, "no analysed snapshot at t = " + exact(t));
}

// ------------------------------------------------------------------ stages

void Pipeline::groundstate() {
  if (ground_state_) return;
  stage_ = "groundstate";
  writer_.set_stage(stage_);
  std::size_t iterations = 0;
  if (input_products_.count("groundstate")) {
    const ArrayData data = read_input("groundstate");
    if (!same_grid(data.meta, cfg_.grid))
      throw ComputeError(ErrorKind::InvalidArgument, "stage input ground state uses a different grid");
    ground_state_.emplace(cfg_.grid, data.complex, 0.0);
    ground_energy_ = parse_exact(data.meta.params.at("energy"));
    iterations = static_cast<std::size_t>(parse_exact(data.meta.params.at("iterations")));
    stages_["groundstate"] = "reused";
  } else {
    GroundStateOptions options = cfg_.groundstate;
    options.threads = cfg_.threads;
    options.energy_history = nullptr;
    GroundStateResult r = ground_state(cfg_.potential, cfg_.grid, options);
    r.state.time = 0.0;
    ground_state_ = std::move(r.state);
    ground_energy_ = r.energy;
    iterations = r.iterations;

    ArrayMeta meta = grid_meta(cfg_.grid, ElementKind::Complex128);
    meta.params = {{"energy", exact(r.energy)}, {"iterations", std::to_string(r.iterations)}, {"time", "0"}};
    writer_.write_array("groundstate", meta, ground_state_->psi);
    std::vector<double> density(ground_state_->psi.size());
    std::transform(ground_state_->psi.begin(), ground_state_->psi.end(), density.begin(),
                   [](cplx v) { return std::norm(v); });
    meta.params.erase("iterations");
    writer_.write_array("density_groundstate", meta, density);
    stages_["groundstate"] = "done";
  }
  json s = {{"energy", *ground_energy_}, {"ionization_potential", ionization_potential()}, {"iterations", iterations}};
  if (has_field()) s["keldysh_gamma"] = keldysh_gamma(cfg_.pulse, ionization_potential());
  summary_["groundstate"] = s;
}

void Pipeline::propagate() {
  if (propagated_) return;
  groundstate();
  stage_ = "propagate";
  writer_.set_stage(stage_);
  const auto& times = cfg_.propagation.snapshot_times;

  // Snapshots from the stage input, keyed by requested time.
  std::map<double, std::string> listed;
  for (const auto& [name, files] : input_products_) {
    if (name.rfind("snapshot_t", 0) != 0) continue;
    const ArrayData meta_only = [&] {
      for (const auto& [path, sha] : files)
        if (path.extension() == ".meta") return ArrayData{read_array(path).meta, {}, {}};
      throw ComputeError(ErrorKind::Io, "stage input " + name + " has no sidecar");
    }();
    listed[parse_exact(meta_only.meta.params.at("requested_time"))] = name;
  }
  if (!listed.empty()) {
    std::vector<std::string> missing;
    for (double t : times)
      if (!listed.count(t)) missing.push_back(exact(t));
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw ComputeError(ErrorKind::InvalidArgument, "stage input lacks snapshots at t = " + list);
    }
    for (double t : times) {
      const std::string& name = listed.at(t);
      for (const auto& [path, sha] : input_products_.at(name)) {
        if (sha256_file(path) != sha)
          throw ComputeError(ErrorKind::Io, "checksum mismatch for stage input " + path.string());
        inputs_.push_back({{"name", name}, {"file", path.string()}, {"sha256", sha}});
      }
      auto s = std::make_unique<Snapshot>();
      s->file = input_products_.at(name).front().first;
      snapshots_[t] = std::move(s);
    }
    stages_["propagate"] = "reused";
    summary_["propagate"] = {{"status", "reused"}, {"snapshots", times.size()}};
    propagated_ = true;
    return;
  }

  PropagationRun run{*ground_state_, cfg_.pulse, cfg_.potential, cfg_.propagation, {}, {}};
  run.initial.time = 0.0;
  run.config.threads = cfg_.threads;

  // Onset probes ride along as snapshot requests that are never stored.
  std::optional<ExitPosition> onset_cut;
  std::vector<double> probes;
  if (has_field()) {
    onset_cut = exit_position(cfg_.onset.exit_time);
    const auto n = static_cast<long long>(std::floor(cfg_.propagation.t_end / cfg_.onset.probe_interval + 1e-9));
    for (long long k = 0; k <= n; ++k) probes.push_back(static_cast<double>(k) * cfg_.onset.probe_interval);
  }
  const std::set<double> snapshot_set(times.begin(), times.end());
  const std::set<double> probe_set(probes.begin(), probes.end());
  std::set<double> all = snapshot_set;
  all.insert(probes.begin(), probes.end());
  run.config.snapshot_times.assign(all.begin(), all.end());

  const std::vector<double> mask = absorber_mask(cfg_.propagation.absorber, cfg_.grid);
  Table onset{{}, {"t", "p_beyond", "ratio_to_t0", "p_mask_region"}, {}};
  std::optional<double> onset_time;
  double p_beyond_0 = 0.0;
  double max_mask_probability = 0.0;
  json snapshot_summary = json::array();

  tunnelexit::propagate(run, [&](double requested, const WavefunctionGrid& wf) {
    const double p_mask = probability_in(wf, mask);
    max_mask_probability = std::max(max_mask_probability, p_mask);
    if (probe_set.count(requested)) {
      const double p = probability_beyond(wf, onset_cut->z, onset_cut->z < 0.0);
      if (onset.rows.empty()) p_beyond_0 = p;
      if (!onset_time && p >= cfg_.onset.threshold) onset_time = requested;
      onset.rows.push_back({writer_.format(requested), writer_.format(p),
                            writer_.format(p_beyond_0 > 0.0 ? p / p_beyond_0 : std::nan("")),
                            writer_.format(p_mask)});
    }
    if (snapshot_set.count(requested)) {
      const std::string name = timed_name("snapshot", requested);
      ArrayMeta meta = grid_meta(wf.grid, ElementKind::Complex128);
      meta.params = {{"requested_time", exact(requested)}, {"time", exact(wf.time)}};
      writer_.write_array(name, meta, wf.psi);
      std::vector<double> density(wf.psi.size());
      std::transform(wf.psi.begin(), wf.psi.end(), density.begin(), [](cplx v) { return std::norm(v); });
      writer_.write_array(timed_name("density", requested), meta, density);
      auto s = std::make_unique<Snapshot>();
      s->file = writer_.directory() / (name + ".bin");
      snapshots_[requested] = std::move(s);
      keep_in_memory(requested, wf);
      snapshot_summary.push_back(
          {{"requested_time", requested}, {"time", wf.time}, {"norm", norm(wf)}, {"p_mask_region", p_mask}});
    }
    return false;
  });

  const auto& d = run.diagnostics;
  Table diag{{}, {"t", "norm", "z_mean", "dvdz_mean", "field"}, {}};
  for (std::size_t k = 0; k < d.time.size(); ++k)
    diag.rows.push_back({writer_.format(d.time[k]), writer_.format(d.norm[k]), writer_.format(d.z_mean[k]),
                         writer_.format(d.dvdz_mean[k]), writer_.format(d.field[k])});
  writer_.write_table("propagation_diagnostics", diag);

  json s = {{"steps", d.time.empty() ? 0 : d.time.size() - 1},
            {"final_norm", d.norm.empty() ? 1.0 : d.norm.back()},
            {"max_mask_region_probability", max_mask_probability},
            {"snapshots", snapshot_summary}};
  if (onset_cut) {
    const double t_peak = cfg_.pulse.t_peak();
    onset.comments = {"criterion: probability beyond the tunnel exit of t = " + writer_.format(cfg_.onset.exit_time) +
                          " on the downhill side >= " + writer_.format(cfg_.onset.threshold),
                      "z_cut = " + writer_.format(onset_cut->z) + " (" + onset_cut->kind + ")"};
    writer_.write_table("onset", onset);
    json o = {{"exit_time", cfg_.onset.exit_time},
              {"z_cut", onset_cut->z},
              {"z_cut_kind", onset_cut->kind},
              {"threshold", cfg_.onset.threshold},
              {"probe_interval", cfg_.onset.probe_interval},
              {"window", {t_peak - 25.0, t_peak}}};
    o["onset_time"] = onset_time ? json(*onset_time) : json(nullptr);
    o["in_window"] = onset_time && *onset_time >= t_peak - 25.0 && *onset_time <= t_peak;
    s["onset"] = o;
  } else {
    s["onset"] = {{"status", "skipped: no field"}};
  }
  summary_["propagate"] = s;
  stages_["propagate"] = "done";
  propagated_ = true;
}

void Pipeline::phase_space(bool write_maps, bool write_moments) {
  if (analysed_) return;
  propagate();
  stage_ = "phase_space";
  writer_.set_stage(stage_);
  const auto& ps_cfg = cfg_.phase_space;
  const std::vector<ZWindow> windows = ps_cfg.window_width > 0.0
                                           ? tile_windows(cfg_.grid, ps_cfg.window_width, ps_cfg.window_overlap)
                                           : std::vector<ZWindow>{full_window(cfg_.grid)};
  const bool single = windows.size() == 1;
  const bool refined = ps_cfg.zeta_sampling == ZetaSampling::Refined;
  const std::size_t budget = memory_budget_bytes(cfg_);
  const ReductionMode alt_mode = ps_cfg.reduction_mode == ReductionMode::DensityMatrix
                                     ? ReductionMode::AmplitudeIntegrated
                                     : ReductionMode::DensityMatrix;
  auto is_compare_time = [&](double t) {
    return std::any_of(cfg_.trajectories.compare_times.begin(), cfg_.trajectories.compare_times.end(),
                       [&](double c) { return std::abs(c - t) <= 0.5 * cfg_.propagation.dt; });
  };

  Table check{{"qmf_rms and qmf_max compare P1/P0 with the probability-current velocity on grid nodes",
               "mode_w_max and mode_qmf_rms compare against the " + mode_name(alt_mode) + " reduction"},
              {"t", "window", "z_first", "z_last", "masked_nodes", "qmf_rms", "qmf_max", "w_max_times_pi",
               "marginal_error", "normalization_error", "imag_residue", "excluded_norm", "mode_w_max",
               "mode_qmf_rms"},
              {}};
  json snaps = json::array();
  double worst_rms = 0.0, worst_w = 0.0, worst_marginal = 0.0, worst_norm = 0.0, worst_overlap = 0.0;

  for (const auto& [t, entry] : snapshots_) {
    const WavefunctionGrid wf = snapshot(t);
    const std::size_t stride = refined ? 2 : 1;
    const std::size_t n_global = stride * (cfg_.grid.n_z - 1) + 1;
    MomentProfiles stitched;
    std::vector<long long> best(n_global, -1);
    std::vector<std::vector<double>> p1_by_window;
    json wins = json::array();

    for (std::size_t k = 0; k < windows.size(); ++k) {
      const ZWindow& win = windows[k];
      const ReducedDensity rd = reduce_to_z(wf, win, ps_cfg.reduction_mode, ps_cfg.zeta_sampling, budget, cfg_.threads);
      PhaseSpaceMap ps = wigner(rd, cfg_.threads);
      const MomentProfiles mp = moments(ps, 1, ps_cfg.p0_floor);

      double w_max = 0.0;
      for (double v : ps.w) w_max = std::max(w_max, std::abs(v));
      double marginal = 0.0, p0_sum = 0.0;
      for (std::size_t a = 0; a < mp.n_z; ++a) {
        marginal = std::max(marginal, std::abs(mp.moments[0][a] - rd(a, a).real()));
        p0_sum += mp.moments[0][a] * ps.dz;
      }
      const double normalization = std::abs(p0_sum - rd.trace());

      const auto [density, current] = density_and_current_z(wf, win);
      std::vector<double> v_current(mp.n_z, std::nan(""));
      double sq = 0.0, mx = 0.0;
      std::size_t counted = 0;
      for (std::size_t i = 0; i < density.size(); ++i) {
        const std::size_t a = stride * i;
        if (!mp.mask[a] || !(density[i] > 0.0)) continue;
        v_current[a] = current[i] / density[i];
        const double e = mp.qmf[a] - v_current[a];
        sq += e * e;
        mx = std::max(mx, std::abs(e));
        ++counted;
      }
      const double rms = counted ? std::sqrt(sq / static_cast<double>(counted)) : 0.0;

      const PhaseSpaceMap alt = wigner(reduce_to_z(wf, win, alt_mode, ps_cfg.zeta_sampling, budget, cfg_.threads),
                                       cfg_.threads);
      const MomentProfiles alt_mp = moments(alt, 1, ps_cfg.p0_floor);
      double mode_w = 0.0, mode_sq = 0.0;
      std::size_t mode_n = 0;
      for (std::size_t i = 0; i < std::min(alt.w.size(), ps.w.size()); ++i)
        mode_w = std::max(mode_w, std::abs(alt.w[i] - ps.w[i]));
      for (std::size_t a = 0; a < std::min(mp.n_z, alt_mp.n_z); ++a) {
        if (!mp.mask[a] || !alt_mp.mask[a]) continue;
        const double e = mp.qmf[a] - alt_mp.qmf[a];
        mode_sq += e * e;
        ++mode_n;
      }
      const double mode_rms = mode_n ? std::sqrt(mode_sq / static_cast<double>(mode_n)) : 0.0;

      worst_rms = std::max(worst_rms, rms);
      worst_w = std::max(worst_w, w_max * std::numbers::pi);
      worst_marginal = std::max(worst_marginal, marginal);
      worst_norm = std::max(worst_norm, normalization);

      const std::string suffix = single ? "" : "_w" + std::to_string(k);
      if (write_maps) {
        ArrayMeta meta;
        meta.shape = {ps.n_z, ps.n_p};
        meta.axes = {{"z", "a.u.", ps.z0, ps.dz}, {"p_z", "a.u.", ps.p0, ps.dp}};
        meta.params = {{"time", exact(wf.time)},
                       {"requested_time", exact(t)},
                       {"window_first", std::to_string(win.first)},
                       {"window_last", std::to_string(win.last)},
                       {"reduction_mode", mode_name(ps_cfg.reduction_mode)},
                       {"zeta_sampling", refined ? "refined" : "grid"},
                       {"excluded_norm", exact(ps.excluded_norm)},
                       {"max_imag_residue", exact(ps.max_imag_residue)}};
        writer_.write_array(timed_name("wigner", t) + suffix, meta, ps.w);
      }
      if (write_moments) {
        Table tab{{"time = " + writer_.format(wf.time), "p0_floor = " + writer_.format(ps_cfg.p0_floor),
                   "v_current: probability-current velocity on grid nodes, nan elsewhere"},
                  {"z", "P0", "P1", "qmf", "mask", "v_current"},
                  {}};
        for (std::size_t a = 0; a < mp.n_z; ++a)
          tab.rows.push_back({writer_.format(mp.z(a)), writer_.format(mp.moments[0][a]),
                              writer_.format(mp.moments[1][a]), writer_.format(mp.qmf[a]), mp.mask[a] ? "1" : "0",
                              writer_.format(v_current[a])});
        writer_.write_table(timed_name("qmf", t) + suffix, tab);
      }
      check.rows.push_back({writer_.format(t), std::to_string(k), writer_.format(cfg_.grid.z(win.first)),
                            writer_.format(cfg_.grid.z(win.last)), std::to_string(counted), writer_.format(rms),
                            writer_.format(mx), writer_.format(w_max * std::numbers::pi), writer_.format(marginal),
                            writer_.format(normalization), writer_.format(ps.max_imag_residue),
                            writer_.format(ps.excluded_norm), writer_.format(mode_w), writer_.format(mode_rms)});
      wins.push_back({{"window", k},
                      {"qmf_rms", rms},
                      {"qmf_max", mx},
                      {"masked_nodes", counted},
                      {"w_max_times_pi", w_max * std::numbers::pi},
                      {"marginal_error", marginal},
                      {"normalization_error", normalization},
                      {"imag_residue", ps.max_imag_residue},
                      {"excluded_norm", ps.excluded_norm},
                      {"mode_w_max", mode_w},
                      {"mode_qmf_rms", mode_rms}});

      // Stitch: each global node takes the window where it sits deepest.
      if (k == 0) {
        stitched = mp;
        stitched.z0 = cfg_.grid.z_min;
        stitched.dz = cfg_.grid.dz() / static_cast<double>(stride);
        stitched.n_z = n_global;
        stitched.moments.assign(2, std::vector<double>(n_global, 0.0));
        stitched.qmf.assign(n_global, 0.0);
        stitched.mask.assign(n_global, false);
        p1_by_window.assign(windows.size(), std::vector<double>(n_global, std::nan("")));
      }
      const std::size_t offset = stride * win.first;
      for (std::size_t a = 0; a < mp.n_z && offset + a < n_global; ++a) {
        const std::size_t g = offset + a;
        const auto depth = static_cast<long long>(std::min(a, mp.n_z - 1 - a));
        p1_by_window[k][g] = mp.moments[1][a];
        if (depth <= best[g]) continue;
        best[g] = depth;
        stitched.moments[0][g] = mp.moments[0][a];
        stitched.moments[1][g] = mp.moments[1][a];
        stitched.qmf[g] = mp.qmf[a];
        stitched.mask[g] = mp.mask[a];
      }
      if (single && is_compare_time(t)) {
        auto an = std::make_unique<Analysis>();
        an->map = std::move(ps);
        analyses_[t] = std::move(an);
      }
    }

    double overlap = 0.0;
    for (std::size_t k = 0; k + 1 < windows.size(); ++k)
      for (std::size_t g = 0; g < n_global; ++g) {
        const double a = p1_by_window[k][g], b = p1_by_window[k + 1][g];
        if (std::isfinite(a) && std::isfinite(b)) overlap = std::max(overlap, std::abs(a - b));
      }
    worst_overlap = std::max(worst_overlap, overlap);

    auto& an = analyses_[t];
    if (!an) an = std::make_unique<Analysis>();
    an->t = t;
    stitched.time = wf.time;
    an->profile = std::move(stitched);
    snaps.push_back({{"t", t}, {"time", wf.time}, {"windows", wins}, {"overlap_p1_disagreement", overlap}});
  }

  if (write_moments) writer_.write_table("qmf_check", check);
  summary_["phase_space"] = {{"windows", windows.size()},
                             {"reduction_mode", mode_name(ps_cfg.reduction_mode)},
                             {"zeta_sampling", refined ? "refined" : "grid"},
                             {"max_qmf_rms", worst_rms},
                             {"max_w_times_pi", worst_w},
                             {"max_marginal_error", worst_marginal},
                             {"max_normalization_error", worst_norm},
                             {"max_overlap_p1_disagreement", worst_overlap},
                             {"snapshots", snaps}};
  stages_["phase_space"] = "done";
  analysed_ = true;
}

void Pipeline::trajectories() {
  if (!has_field()) {
    skip("trajectories");
    return;
  }
  groundstate();
  phase_space(false, true);
  stage_ = "trajectories";
  writer_.set_stage(stage_);
  const auto& tc = cfg_.trajectories;
  const double t_end = tc.t_end > 0.0 ? tc.t_end : cfg_.pulse.t_end();

  std::vector<MomentProfiles> profiles;
  std::vector<PhaseSpaceMap> maps;
  bool all_maps = true;
  for (double t : tc.compare_times) {
    const Analysis& a = analysis_at(t);
    profiles.push_back(a.profile);
    all_maps = all_maps && a.map.has_value();
  }
  if (all_maps)
    for (double t : tc.compare_times) maps.push_back(*analysis_at(t).map);

  json per_exit = json::array();
  bool ordering = true;
  for (double t_i : tc.exit_times) {
    const ExitPosition ex = exit_position(t_i);
    const std::string tag = timed_name("", t_i).substr(1);  // "_t145" -> "t145"

    Table region{{"contour V(z, rho) + q E(t) z = -I_p at t = " + writer_.format(t_i),
                  "one polyline per id, points in order"},
                 {"polyline", "z", "rho"},
                 {}};
    try {
      const auto lines = tunnel_region(cfg_.potential, cfg_.pulse, t_i, -ionization_potential(), cfg_.grid);
      for (std::size_t k = 0; k < lines.size(); ++k)
        for (const auto& [z, rho] : lines[k])
          region.rows.push_back({std::to_string(k), writer_.format(z), writer_.format(rho)});
    } catch (const ComputeError& e) {
      if (e.kind() != ErrorKind::EmptyRegion) throw;
      region.comments.push_back("empty region: the level is never crossed");
    }
    writer_.write_table("tunnel_region_" + tag, region);

    const bool seeded = std::any_of(tc.families.begin(), tc.families.end(),
                                    [](Family f) { return f != Family::SimpleMan; });
    MomentumPair seed;
    if (seeded) {
      const Analysis& a = analysis_at(t_i);
      std::optional<WavefunctionGrid> wf;
      if (tc.transverse_model == TransverseModel::CurrentBased) wf = snapshot(a.t);
      seed = seed_from_qmf(a.profile, ex.z, tc.transverse_model, 2.0 * cfg_.grid.dz(), wf ? &*wf : nullptr);
    }

    json fams = json::object();
    std::map<Family, double> mean_dp;
    for (Family f : tc.families) {
      TrajectorySpec spec;
      spec.t_i = t_i;
      spec.exit_z = ex.z;
      spec.flags.magnetic_term = tc.magnetic_term;
      if (f == Family::SimpleMan) {
        spec.flags.model = TrajectoryModel::SimpleMan;
      } else {
        spec.p_z0 = seed.p_z;
        spec.p_rho0 = seed.p_rho;
        spec.flags.coulomb_force = f == Family::QmfSeededCoulomb;
      }
      const Trajectory traj = integrate(spec, cfg_.pulse, cfg_.potential, t_end, tc.options);
      const std::string name = to_string(f) + "_" + tag;

      Table tab{{"family = " + to_string(f), "t_i = " + writer_.format(t_i),
                 "exit_z = " + writer_.format(ex.z) + " (" + ex.kind + ")", "p_z0 = " + writer_.format(spec.p_z0),
                 "p_rho0 = " + writer_.format(spec.p_rho0),
                 std::string("coulomb_force = ") + (spec.flags.coulomb_force ? "true" : "false"),
                 std::string("magnetic_term = ") + (spec.flags.magnetic_term ? "true" : "false"),
                 "x is the propagation axis (rho of the exit momentum)"},
                {"t", "x", "z", "p_x", "p_z"},
                {}};
      for (const auto& s : traj.states)
        tab.rows.push_back({writer_.format(s.t), writer_.format(s.x), writer_.format(s.z), writer_.format(s.p_x),
                            writer_.format(s.p_z)});
      writer_.write_table("trajectory_" + name, tab);

      const DeviationReport rep = compare_to_qmf(traj, profiles, maps);
      Table dev{{"family = " + to_string(f), "mean_delta_p = " + writer_.format(rep.mean_delta_p),
                 "weighted_ridge_distance = " + writer_.format(rep.weighted_ridge_distance)},
                {"t", "z_cl", "p_cl", "qmf", "delta_p", "p_ridge", "ridge_distance", "density"},
                {}};
      for (const auto& r : rep.rows)
        dev.rows.push_back({writer_.format(r.t), writer_.format(r.z_cl), writer_.format(r.p_cl),
                            writer_.format(r.qmf), writer_.format(r.delta_p), writer_.format(r.p_ridge),
                            writer_.format(r.ridge_distance), writer_.format(r.density)});
      writer_.write_table("qmf_deviation_" + name, dev);

      json fj = {{"mean_delta_p", rep.mean_delta_p},
                 {"weighted_ridge_distance", rep.weighted_ridge_distance},
                 {"compared_snapshots", rep.rows.size()},
                 {"final_p_z", traj.final_momentum.p_z},
                 {"final_p_rho", traj.final_momentum.p_rho}};
      if (traj.long_run_momentum)
        fj["long_run_momentum"] = {traj.long_run_momentum->p_z, traj.long_run_momentum->p_rho};
      fams[to_string(f)] = fj;
      if (!rep.rows.empty()) mean_dp[f] = rep.mean_delta_p;
    }
    json ej = {{"t_i", t_i},
               {"exit_z", ex.z},
               {"exit_kind", ex.kind},
               {"seed", {{"p_z", seed.p_z}, {"p_rho", seed.p_rho}}},
               {"families", fams}};
    if (mean_dp.count(Family::SimpleMan) && mean_dp.count(Family::QmfSeeded)) {
      const bool ok = mean_dp[Family::QmfSeeded] < mean_dp[Family::SimpleMan];
      ej["qmf_seeded_closer_than_simple_man"] = ok;
      ordering = ordering && ok;
    }
    per_exit.push_back(ej);
  }
  summary_["trajectories"] = {{"t_end", t_end}, {"exit_times", per_exit}, {"ordering_holds", ordering}};
  stages_["trajectories"] = "done";
}

void Pipeline::reconstruct(const std::vector<DetectorMomentum>* detector) {
  if (!has_field()) {
    skip("reconstruct");
    return;
  }
  const auto& rc = cfg_.reconstruction;
  const TimeWindow window = rc.window.empty() ? peak_half_cycle(cfg_.pulse) : TimeWindow{rc.window[0], rc.window[1]};
  const bool need_qmf = detector && rc.prior_model == ExitPriorKind::QmfTable;
  if (need_qmf || analysed_) {
    groundstate();
    phase_space(false, true);
  }
  stage_ = "reconstruct";
  writer_.set_stage(stage_);
  const std::string prior_name = rc.prior_model == ExitPriorKind::ZeroExit ? "zero_exit" : "qmf_table";
  json s = {{"prior_model", prior_name}, {"window", {window.lo, window.hi}}};

  // QMF at the tunnel exit for every analysed snapshot in the pulse.
  ExitPrior qmf_prior{ExitPriorKind::QmfTable, {}, {}};
  if (analysed_) {
    Table tab{{"QMF at the tunnel exit, the exit-momentum table for the qmf_table prior"},
              {"t", "exit_z", "exit_kind", "p_z0"},
              {}};
    groundstate();
    for (const auto& [t, a] : analyses_) {
      if (t <= cfg_.pulse.t_start || t >= cfg_.pulse.t_end()) continue;
      try {
        const ExitPosition ex = exit_position(t);
        const MomentumPair seed =
            seed_from_qmf(a->profile, ex.z, TransverseModel::Zero, 2.0 * cfg_.grid.dz(), nullptr);
        qmf_prior.t.push_back(t);
        qmf_prior.p_z0.push_back(seed.p_z);
        tab.rows.push_back({writer_.format(t), writer_.format(ex.z), ex.kind, writer_.format(seed.p_z)});
      } catch (const ComputeError& e) {
        if (e.kind() != ErrorKind::NoBarrier && e.kind() != ErrorKind::MaskedOut) throw;
      }
    }
    writer_.write_table("qmf_exit_table", tab);
    s["qmf_exit_entries"] = qmf_prior.t.size();
  }

  if (detector) {
    ExitPrior prior;
    if (rc.prior_model == ExitPriorKind::QmfTable) {
      if (qmf_prior.t.empty())
        throw ComputeError(ErrorKind::InvalidArgument, "qmf_table prior needs QMF values at a tunnel exit");
      prior = qmf_prior;
    }
    Table tab{{"prior_model = " + prior_name},
              {"p_z_d", "p_rho_d", "t_i_est", "p_z0_rec", "p_rho0_rec", "n_roots", "multiple_roots",
               "relativistic_warning", "status"},
              {}};
    std::size_t failed = 0;
    for (const auto& det : *detector) {
      const std::string warn = relativistic_warning(det, cfg_.pulse) ? "1" : "0";
      try {
        const ExitTimeEstimate est = estimate_exit_time(det, cfg_.pulse, prior, window);
        const MomentumPair p0 = exit_momentum(det, est.t_i(), cfg_.pulse);
        tab.rows.push_back({writer_.format(det.p_z), writer_.format(det.p_rho), writer_.format(est.t_i()),
                            writer_.format(p0.p_z), writer_.format(p0.p_rho), std::to_string(est.roots.size()),
                            est.multiple_roots ? "1" : "0", warn, "ok"});
      } catch (const ComputeError& e) {
        if (e.kind() != ErrorKind::NoRoot) throw;
        ++failed;
        const std::string nan = writer_.format(std::nan(""));
        tab.rows.push_back({writer_.format(det.p_z), writer_.format(det.p_rho), nan, nan, nan, "0", "0", warn,
                            "NoRoot"});
      }
    }
    writer_.write_table("reconstruction_records", tab);
    s["records"] = detector->size();
    s["no_root"] = failed;
    summary_["reconstruct"] = s;
    stages_["reconstruct"] = "done";
    return;
  }

  // Round trip over the (t_i, p_z0, p_rho0) grid, magnetic term per config,
  // no Coulomb force. The qmf_table prior here is the law the forward runs
  // follow: each trajectory family keeps its exit momentum fixed over t_i.
  const double t_peak = cfg_.pulse.t_peak();
  const auto t_grid = linspace(t_peak + rc.t_i_offsets[0], t_peak + rc.t_i_offsets[1], rc.grid_points);
  const auto pz_grid = linspace(rc.p_z0_range[0], rc.p_z0_range[1], rc.grid_points);
  const auto pr_grid = linspace(rc.p_rho0_range[0], rc.p_rho0_range[1], rc.grid_points);
  if (!ground_energy_) groundstate();

  Table tab{{"prior_model = " + prior_name, "err_*: relative error, absolute where abs_* = 1 (truth is zero)"},
            {"t_i", "p_z0", "p_rho0", "p_z_d", "p_rho_d", "t_i_est", "p_z0_rec", "p_rho0_rec", "err_t_i",
             "err_p_z0", "err_p_rho0", "abs_t_i", "abs_p_z0", "abs_p_rho0", "multiple_roots", "status"},
            {}};
  double max_err[3] = {0.0, 0.0, 0.0};
  std::size_t no_root = 0, multiple = 0;
  const double limits[3] = {1e-3, 5e-2, 1e-3};
  for (double t_i : t_grid)
    for (double pz : pz_grid)
      for (double pr : pr_grid) {
        TrajectorySpec spec;
        spec.t_i = t_i;
        spec.exit_z = exit_position(t_i).z;
        spec.p_z0 = pz;
        spec.p_rho0 = pr;
        spec.flags.magnetic_term = cfg_.trajectories.magnetic_term;
        const ExitPrior prior = rc.prior_model == ExitPriorKind::QmfTable ? ExitPrior::constant(pz) : ExitPrior{};
        std::vector<std::string> row{writer_.format(t_i), writer_.format(pz), writer_.format(pr)};
        try {
          const ReconstructionRecord r =
              validate_roundtrip(spec, cfg_.pulse, cfg_.potential, prior, window, cfg_.trajectories.options);
          const ErrorEntry errs[3] = {*r.err_t_i, *r.err_p_z0, *r.err_p_rho0};
          for (int k = 0; k < 3; ++k) max_err[k] = std::max(max_err[k], errs[k].value);
          multiple += r.multiple_roots;
          for (double v : {r.detector.p_z, r.detector.p_rho, r.t_i_est, r.p_z0_rec, r.p_rho0_rec})
            row.push_back(writer_.format(v));
          for (const auto& e : errs) row.push_back(writer_.format(e.value));
          for (const auto& e : errs) row.push_back(e.absolute ? "1" : "0");
          row.push_back(r.multiple_roots ? "1" : "0");
          row.push_back("ok");
        } catch (const ComputeError& e) {
          if (e.kind() != ErrorKind::NoRoot) throw;
          ++no_root;
          for (int k = 0; k < 11; ++k) row.push_back(k < 8 ? writer_.format(std::nan("")) : "0");
          row.push_back("NoRoot");
        }
        tab.rows.push_back(std::move(row));
      }
  writer_.write_table("reconstruction_roundtrip", tab);
  s["rows"] = tab.rows.size();
  s["no_root"] = no_root;
  s["multiple_roots"] = multiple;
  s["max_error"] = {{"t_i", max_err[0]}, {"p_z0", max_err[1]}, {"p_rho0", max_err[2]}};
  s["limits"] = {{"t_i", limits[0]}, {"p_z0", limits[1]}, {"p_rho0", limits[2]}};
  s["within_limits"] = no_root == 0 && max_err[0] < limits[0] && max_err[1] < limits[1] && max_err[2] < limits[2];
  summary_["reconstruct"] = s;
  stages_["reconstruct"] = "done";
}

}  // namespace tunnelexit
