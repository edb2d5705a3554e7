#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tunnelexit/config.hpp"
#include "tunnelexit/io.hpp"

namespace tunnelexit {

enum class Command { GroundState, Propagate, Wigner, Qmf, Trajectories, Reconstruct, Pipeline };

std::string to_string(Command c);

struct PipelineOutcome {
  int exit_code = 0;  // 0 or 3
  std::string failed_stage;
  std::string error_kind;
  std::string message;
};

/// Runs the stages a command needs and writes every product plus
/// manifest.json into config.output.directory. The config must already be
/// valid. With a stage-input manifest, a ground state and snapshots listed
/// there are reused instead of recomputed (after checking their checksums).
class Pipeline {
 public:
  explicit Pipeline(RunConfig config, std::optional<std::filesystem::path> stage_input = {});
  ~Pipeline();

  /// Compute errors are caught: error.json is written, the manifest records
  /// the failed stage, and the outcome carries exit code 3. `detector` turns
  /// the reconstruct stage into a batch over measured momenta.
  PipelineOutcome run(Command command, const std::vector<DetectorMomentum>* detector = nullptr);

  const nlohmann::json& summary() const { return summary_; }
  std::filesystem::path manifest_path() const;

 private:
  struct Snapshot;
  struct Analysis;
  struct ExitPosition {
    double z = 0.0;
    std::string kind;  // outer_root or barrier_top
  };

  void groundstate();
  void propagate();
  void phase_space(bool write_maps, bool write_moments);
  void trajectories();
  void reconstruct(const std::vector<DetectorMomentum>* detector);

  void load_stage_input();
  void clear_previous_products();
  void write_manifest(Command command, const std::optional<PipelineOutcome>& failure);

  WavefunctionGrid snapshot(double requested);
  void keep_in_memory(double requested, const WavefunctionGrid& wf);
  const Analysis& analysis_at(double t) const;
  ExitPosition exit_position(double t) const;
  double ionization_potential() const;
  bool has_field() const { return cfg_.pulse.E0 != 0.0; }
  void skip(const std::string& stage);

  RunConfig cfg_;
  std::optional<std::filesystem::path> stage_input_;
  ProductWriter writer_;
  nlohmann::json summary_ = nlohmann::json::object();
  std::map<std::string, std::string> stages_;
  nlohmann::json inputs_ = nlohmann::json::array();
  std::string stage_;

  // Files listed in the stage-input manifest: product name -> (path, sha256).
  std::map<std::string, std::vector<std::pair<std::filesystem::path, std::string>>> input_products_;
  ArrayData read_input(const std::string& name);

  std::optional<double> ground_energy_;
  std::optional<WavefunctionGrid> ground_state_;
  std::map<double, std::unique_ptr<Snapshot>> snapshots_;
  std::size_t snapshot_bytes_ = 0;
  std::map<double, std::unique_ptr<Analysis>> analyses_;
  bool propagated_ = false;
  bool analysed_ = false;
};

}  // namespace tunnelexit
