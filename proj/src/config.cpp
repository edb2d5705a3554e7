#include "tunnelexit/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "tunnelexit/error.hpp"
#include "tunnelexit/hash.hpp"

namespace tunnelexit {

RunConfig::RunConfig() {
  pulse.E0 = 0.095;
  pulse.omega = 0.057;
  grid = {-80.0, 80.0, 801, 40.0, 200};
  groundstate.tol = 1e-10;
  propagation.dt = 0.05;
  propagation.t_end = 170.0;
  propagation.snapshot_times = {0.0, 145.0, 150.0, 155.0, 160.0, 165.0, 170.0};
  propagation.absorber = {AbsorberKind::Mask, 15.0, 0.125};
}

std::string to_string(Family f) {
  switch (f) {
    case Family::SimpleMan: return "simple_man";
    case Family::QmfSeeded: return "qmf_seeded";
    case Family::QmfSeededCoulomb: return "qmf_seeded_coulomb";
  }
  return "unknown";
}

std::size_t memory_budget_bytes(const RunConfig& c) {
  return static_cast<std::size_t>(c.output.memory_budget_gib * 1024.0 * 1024.0 * 1024.0);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) return std::nullopt;
  return v;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class E>
using Names = std::vector<std::pair<E, const char*>>;

const Names<PotentialKind> kPotentialKinds{{PotentialKind::Coulomb, "coulomb"},
                                           {PotentialKind::SoftCore, "soft_core"}};
const Names<AbsorberKind> kAbsorberKinds{{AbsorberKind::None, "none"}, {AbsorberKind::Mask, "mask"}};
const Names<ReductionMode> kReductionModes{{ReductionMode::DensityMatrix, "density_matrix"},
                                           {ReductionMode::AmplitudeIntegrated, "amplitude_integrated"}};
const Names<ZetaSampling> kZetaSamplings{{ZetaSampling::Refined, "refined"}, {ZetaSampling::Grid, "grid"}};
const Names<Family> kFamilies{{Family::SimpleMan, "simple_man"},
                              {Family::QmfSeeded, "qmf_seeded"},
                              {Family::QmfSeededCoulomb, "qmf_seeded_coulomb"}};
const Names<TransverseModel> kTransverse{{TransverseModel::Zero, "zero"},
                                         {TransverseModel::CurrentBased, "current_based"}};
const Names<OverBarrierPolicy> kOverBarrier{{OverBarrierPolicy::BarrierTop, "barrier_top"},
                                            {OverBarrierPolicy::Fail, "fail"}};
const Names<ExitPriorKind> kPriors{{ExitPriorKind::ZeroExit, "zero_exit"}, {ExitPriorKind::QmfTable, "qmf_table"}};

template <class E>
std::string name_of(const Names<E>& names, E v) {
  for (const auto& [e, n] : names)
    if (e == v) return n;
  return "?";
}

template <class E>
std::string choices(const Names<E>& names) {
  std::string out;
  for (const auto& [e, n] : names) out += (out.empty() ? "" : ", ") + std::string(n);
  return out;
}

using Setter = std::function<std::optional<std::string>(RunConfig&, std::string_view)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  std::string key;
  Getter get;
  Setter set;
};

template <class Ref>
Field real_field(std::string key, Ref ref) {
  return {key, [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, std::string_view v) -> std::optional<std::string> {
            const auto d = parse_double(v);
            if (!d) return "expected a finite number";
            ref(c) = *d;
            return std::nullopt;
          }};
}

template <class Int, class Ref>
Field int_field(std::string key, Ref ref) {
  return {key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, std::string_view v) -> std::optional<std::string> {
            const auto d = parse_int<Int>(v);
            if (!d) return "expected an integer";
            ref(c) = *d;
            return std::nullopt;
          }};
}

template <class Ref>
Field bool_field(std::string key, Ref ref) {
  return {key, [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref](RunConfig& c, std::string_view v) -> std::optional<std::string> {
            if (v == "true") ref(c) = true;
            else if (v == "false") ref(c) = false;
            else return "expected true or false";
            return std::nullopt;
          }};
}

template <class E, class Ref>
Field enum_field(std::string key, const Names<E>& names, Ref ref) {
  return {key, [&names, ref](const RunConfig& c) { return name_of(names, ref(const_cast<RunConfig&>(c))); },
          [&names, ref](RunConfig& c, std::string_view v) -> std::optional<std::string> {
            for (const auto& [e, n] : names) {
              if (v == n) {
                ref(c) = e;
                return std::nullopt;
              }
            }
            return "expected one of " + choices(names);
          }};
}

template <class Ref>
Field real_list_field(std::string key, Ref ref) {
  return {key,
          [ref](const RunConfig& c) {
            std::string out;
            for (double v : ref(const_cast<RunConfig&>(c))) out += (out.empty() ? "" : ", ") + format_double(v);
            return out;
          },
          [ref](RunConfig& c, std::string_view v) -> std::optional<std::string> {
            std::vector<double> values;
            for (const auto& item : split_list(v)) {
              const auto d = parse_double(item);
              if (!d) return "expected a comma-separated list of finite numbers";
              values.push_back(*d);
            }
            ref(c) = std::move(values);
            return std::nullopt;
          }};
}

template <class E, class Ref>
Field enum_list_field(std::string key, const Names<E>& names, Ref ref) {
  return {key,
          [&names, ref](const RunConfig& c) {
            std::string out;
            for (E v : ref(const_cast<RunConfig&>(c))) out += (out.empty() ? "" : ", ") + name_of(names, v);
            return out;
          },
          [&names, ref](RunConfig& c, std::string_view v) -> std::optional<std::string> {
            std::vector<E> values;
            for (const auto& item : split_list(v)) {
              auto it = std::find_if(names.begin(), names.end(), [&](const auto& p) { return item == p.second; });
              if (it == names.end()) return "unknown entry '" + item + "', expected " + choices(names);
              values.push_back(it->first);
            }
            ref(c) = std::move(values);
            return std::nullopt;
          }};
}

#define REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> all{
      real_field("pulse.E0", REF(pulse.E0)),
      real_field("pulse.omega", REF(pulse.omega)),
      real_field("pulse.t_start", REF(pulse.t_start)),
      enum_field("potential.kind", kPotentialKinds, REF(potential.kind)),
      real_field("potential.Z", REF(potential.charge)),
      real_field("potential.a", REF(potential.softening)),
      real_field("grid.z_min", REF(grid.z_min)),
      real_field("grid.z_max", REF(grid.z_max)),
      int_field<std::size_t>("grid.n_z", REF(grid.n_z)),
      real_field("grid.rho_max", REF(grid.rho_max)),
      int_field<std::size_t>("grid.n_rho", REF(grid.n_rho)),
      real_field("groundstate.dt_imag", REF(groundstate.dt_imag)),
      real_field("groundstate.tol", REF(groundstate.tol)),
      int_field<std::size_t>("groundstate.max_iterations", REF(groundstate.max_iterations)),
      real_field("groundstate.seed_width", REF(groundstate.seed_width)),
      real_field("propagation.dt", REF(propagation.dt)),
      real_field("propagation.t_end", REF(propagation.t_end)),
      real_list_field("propagation.snapshot_times", REF(propagation.snapshot_times)),
      enum_field("propagation.absorber.kind", kAbsorberKinds, REF(propagation.absorber.kind)),
      real_field("propagation.absorber.width", REF(propagation.absorber.width)),
      real_field("propagation.absorber.strength", REF(propagation.absorber.strength)),
      int_field<int>("propagation.scheme_order", REF(propagation.scheme_order)),
      real_field("onset.exit_time", REF(onset.exit_time)),
      real_field("onset.threshold", REF(onset.threshold)),
      real_field("onset.probe_interval", REF(onset.probe_interval)),
      real_field("phase_space.window_width", REF(phase_space.window_width)),
      real_field("phase_space.window_overlap", REF(phase_space.window_overlap)),
      real_field("phase_space.p0_floor", REF(phase_space.p0_floor)),
      enum_field("phase_space.reduction_mode", kReductionModes, REF(phase_space.reduction_mode)),
      enum_field("phase_space.zeta_sampling", kZetaSamplings, REF(phase_space.zeta_sampling)),
      real_list_field("trajectories.exit_times", REF(trajectories.exit_times)),
      enum_list_field("trajectories.families", kFamilies, REF(trajectories.families)),
      bool_field("trajectories.magnetic_term", REF(trajectories.magnetic_term)),
      enum_field("trajectories.transverse_model", kTransverse, REF(trajectories.transverse_model)),
      enum_field("trajectories.over_barrier", kOverBarrier, REF(trajectories.over_barrier)),
      real_list_field("trajectories.compare_times", REF(trajectories.compare_times)),
      real_field("trajectories.t_end", REF(trajectories.t_end)),
      real_field("trajectories.dt", REF(trajectories.options.dt)),
      int_field<std::size_t>("trajectories.output_stride", REF(trajectories.options.output_stride)),
      real_field("trajectories.softening", REF(trajectories.options.softening)),
      real_field("trajectories.energy_guard", REF(trajectories.options.energy_guard)),
      real_field("trajectories.long_run", REF(trajectories.options.long_run)),
      real_list_field("reconstruction.window", REF(reconstruction.window)),
      enum_field("reconstruction.prior_model", kPriors, REF(reconstruction.prior_model)),
      int_field<std::size_t>("reconstruction.grid_points", REF(reconstruction.grid_points)),
      real_list_field("reconstruction.t_i_offsets", REF(reconstruction.t_i_offsets)),
      real_list_field("reconstruction.p_z0_range", REF(reconstruction.p_z0_range)),
      real_list_field("reconstruction.p_rho0_range", REF(reconstruction.p_rho0_range)),
      {"output.directory", [](const RunConfig& c) { return c.output.directory; },
       [](RunConfig& c, std::string_view v) -> std::optional<std::string> {
         if (v.empty()) return "must not be empty";
         c.output.directory = std::string(v);
         return std::nullopt;
       }},
      int_field<int>("output.precision", REF(output.precision)),
      real_field("output.memory_budget_gib", REF(output.memory_budget_gib)),
      int_field<int>("run.threads", REF(threads)),
  };
  return all;
}

#undef REF

}  // namespace

RunConfig parse_config(const std::string& text, ConfigIssues& issues) {
  RunConfig config;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  std::set<std::string> seen;

  std::istringstream in(text);
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = "line " + std::to_string(number);
    if (eq == std::string::npos) {
      issues.items.push_back(where + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      issues.items.push_back(key + ": unknown key (" + where + ")");
      continue;
    }
    if (!seen.insert(key).second) {
      issues.items.push_back(key + ": given more than once (" + where + ")");
      continue;
    }
    if (auto err = it->second->set(config, value)) issues.items.push_back(key + ": " + *err + " (" + where + ")");
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path, ConfigIssues& issues) {
  std::ifstream in(path);
  if (!in) {
    issues.items.push_back("config: cannot read " + path.string());
    return RunConfig{};
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), issues);
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::string config_digest(const RunConfig& config) {
  RunConfig copy = config;
  copy.output.directory = "-";
  return sha256_hex(serialize_config(copy));
}

std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> issues;
  auto add = [&](std::vector<std::string> more) { issues.insert(issues.end(), more.begin(), more.end()); };
  auto check = [&](bool ok, const char* what) {
    if (!ok) issues.emplace_back(what);
  };

  check(c.pulse.E0 >= 0.0, "pulse.E0: must be ≥ 0");
  check(c.pulse.omega > 0.0, "pulse.omega: must be > 0");
  add(validate(c.potential));
  add(validate(c.grid));

  check(c.groundstate.dt_imag > 0.0, "groundstate.dt_imag: must be > 0");
  check(c.groundstate.tol > 0.0, "groundstate.tol: must be > 0");
  check(c.groundstate.max_iterations >= 1, "groundstate.max_iterations: must be ≥ 1");
  check(c.groundstate.seed_width > 0.0, "groundstate.seed_width: must be > 0");

  if (validate(c.grid).empty()) {
    add(validate(c.propagation, c.grid));
  } else {
    check(c.propagation.dt > 0.0, "propagation.dt: must be > 0");
  }
  check(c.propagation.snapshot_times.size() <= 10000, "propagation.snapshot_times: at most 10000 entries");

  const double t0 = c.pulse.t_start;
  const double t1 = c.pulse.omega > 0.0 ? c.pulse.t_end() : t0;
  auto in_pulse = [&](double t) { return t >= t0 && t <= t1; };
  auto is_snapshot = [&](double t) {
    return std::any_of(c.propagation.snapshot_times.begin(), c.propagation.snapshot_times.end(),
                       [&](double s) { return std::abs(s - t) <= 0.5 * c.propagation.dt; });
  };

  check(c.onset.threshold > 0.0, "onset.threshold: must be > 0");
  check(c.onset.probe_interval > 0.0, "onset.probe_interval: must be > 0");
  check(in_pulse(c.onset.exit_time), "onset.exit_time: must lie inside the pulse");

  check(c.phase_space.window_width >= 0.0, "phase_space.window_width: must be ≥ 0 (0 = whole grid)");
  check(c.phase_space.window_overlap >= 0.0 && c.phase_space.window_overlap < 1.0,
        "phase_space.window_overlap: must lie in [0, 1)");
  check(c.phase_space.p0_floor > 0.0, "phase_space.p0_floor: must be > 0");

  const auto& tr = c.trajectories;
  check(!tr.exit_times.empty(), "trajectories.exit_times: must not be empty");
  check(std::all_of(tr.exit_times.begin(), tr.exit_times.end(), in_pulse),
        "trajectories.exit_times: every time must lie inside the pulse");
  const bool seeded = std::any_of(tr.families.begin(), tr.families.end(),
                                  [](Family f) { return f != Family::SimpleMan; });
  if (seeded)
    check(std::all_of(tr.exit_times.begin(), tr.exit_times.end(), is_snapshot),
          "trajectories.exit_times: qmf_seeded families need a snapshot at every exit time");
  check(std::all_of(tr.compare_times.begin(), tr.compare_times.end(), is_snapshot),
        "trajectories.compare_times: every time must be a snapshot time");
  check(tr.t_end >= 0.0, "trajectories.t_end: must be ≥ 0 (0 = end of pulse)");
  check(tr.options.dt > 0.0, "trajectories.dt: must be > 0");
  check(tr.options.output_stride >= 1, "trajectories.output_stride: must be ≥ 1");
  check(tr.options.softening > 0.0, "trajectories.softening: must be > 0");
  check(tr.options.energy_guard > 0.0, "trajectories.energy_guard: must be > 0");
  check(tr.options.long_run >= 0.0, "trajectories.long_run: must be ≥ 0");

  const auto& rc = c.reconstruction;
  if (!rc.window.empty()) {
    check(rc.window.size() == 2 && rc.window[0] < rc.window[1] && in_pulse(rc.window[0]) && in_pulse(rc.window[1]),
          "reconstruction.window: must be empty or 'lo, hi' inside the pulse with lo < hi");
  }
  check(rc.grid_points >= 1, "reconstruction.grid_points: must be ≥ 1");
  auto range_ok = [](const std::vector<double>& r) { return r.size() == 2 && r[0] <= r[1]; };
  check(range_ok(rc.t_i_offsets), "reconstruction.t_i_offsets: must be 'lo, hi' with lo ≤ hi");
  check(range_ok(rc.p_z0_range), "reconstruction.p_z0_range: must be 'lo, hi' with lo ≤ hi");
  check(range_ok(rc.p_rho0_range), "reconstruction.p_rho0_range: must be 'lo, hi' with lo ≤ hi");

  check(c.output.precision >= 1 && c.output.precision <= 17, "output.precision: must lie in [1, 17]");
  check(c.output.memory_budget_gib > 0.0, "output.memory_budget_gib: must be > 0");
  check(c.threads >= 1, "run.threads: must be ≥ 1");
  return issues;
}

}  // namespace tunnelexit
