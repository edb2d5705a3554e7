#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "tunnelexit/atomic.hpp"
#include "tunnelexit/classical.hpp"
#include "tunnelexit/phase_space.hpp"
#include "tunnelexit/propagator.hpp"
#include "tunnelexit/pulse.hpp"
#include "tunnelexit/reconstruction.hpp"

namespace tunnelexit {

/// Outgoing-density criterion for the ionization onset: probability beyond
/// the tunnel exit of `exit_time`, on the downhill side, checked every
/// `probe_interval` a.u.
struct OnsetConfig {
  double exit_time = 145.0;
  double threshold = 1e-5;
  double probe_interval = 5.0;
};

struct PhaseSpaceConfig {
  /// Window width in a.u.; 0 means one window over the whole grid.
  double window_width = 0.0;
  double window_overlap = 0.1;
  double p0_floor = 1e-8;
  ReductionMode reduction_mode = ReductionMode::DensityMatrix;
  ZetaSampling zeta_sampling = ZetaSampling::Refined;
};

enum class Family { SimpleMan, QmfSeeded, QmfSeededCoulomb };

enum class OverBarrierPolicy { BarrierTop, Fail };

struct TrajectoriesConfig {
  std::vector<double> exit_times{145.0};
  std::vector<Family> families{Family::SimpleMan, Family::QmfSeeded, Family::QmfSeededCoulomb};
  bool magnetic_term = true;
  TransverseModel transverse_model = TransverseModel::Zero;
  OverBarrierPolicy over_barrier = OverBarrierPolicy::BarrierTop;
  std::vector<double> compare_times{150.0, 160.0, 170.0};
  /// 0 means the end of the pulse.
  double t_end = 0.0;
  ClassicalOptions options{0.01, 10, 0.1, 1e-6, 500.0};
};

struct ReconstructionConfig {
  /// Empty means the half cycle around the field peak.
  std::vector<double> window;
  ExitPriorKind prior_model = ExitPriorKind::QmfTable;
  std::size_t grid_points = 5;
  std::vector<double> t_i_offsets{-25.0, 0.0};  // relative to the field peak
  std::vector<double> p_z0_range{-0.1, 0.1};
  std::vector<double> p_rho0_range{0.0, 0.05};
};

struct OutputConfig {
  std::string directory = "out";
  int precision = 17;
  double memory_budget_gib = 4.0;
};

struct RunConfig {
  LaserPulse pulse;
  Potential potential;
  CylGrid grid;
  GroundStateOptions groundstate;
  PropagatorConfig propagation;
  OnsetConfig onset;
  PhaseSpaceConfig phase_space;
  TrajectoriesConfig trajectories;
  ReconstructionConfig reconstruction;
  OutputConfig output;
  int threads = 1;

  RunConfig();
};

/// Problems found while reading or validating, each "path: reason".
struct ConfigIssues {
  std::vector<std::string> items;
  bool empty() const { return items.empty(); }
};

/// Parses "key.path = value" lines. '#' starts a comment, lists are comma
/// separated. Unknown keys, duplicates and malformed values are all
/// collected; the result holds every value that did parse.
RunConfig parse_config(const std::string& text, ConfigIssues& issues);
RunConfig load_config(const std::filesystem::path& path, ConfigIssues& issues);

/// Every key in a fixed order with 17 significant digits.
std::string serialize_config(const RunConfig& config);

/// Every violated constraint across all sections.
std::vector<std::string> validate(const RunConfig& config);

/// SHA-256 of the serialized config without output.directory.
std::string config_digest(const RunConfig& config);

std::string to_string(Family f);
std::size_t memory_budget_bytes(const RunConfig& config);

}  // namespace tunnelexit
