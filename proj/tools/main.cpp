// Command-line driver: one subcommand per pipeline stage.
//   exit 0  success
//   exit 2  invalid config, arguments or input table
//   exit 3  compute error (see error.json in the output directory)

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tunnelexit/config.hpp"
#include "tunnelexit/error.hpp"
#include "tunnelexit/io.hpp"
#include "tunnelexit/pipeline.hpp"

namespace te = tunnelexit;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string stage_input;
  std::string input;
};

int report_issues(const std::vector<std::string>& issues) {
  for (const auto& i : issues) std::cerr << "error: " << i << "\n";
  return 2;
}

std::optional<te::RunConfig> load(const Options& o, int& code) {
  te::ConfigIssues issues;
  te::RunConfig cfg = te::load_config(o.config, issues);
  if (!issues.empty()) {
    code = report_issues(issues.items);
    return std::nullopt;
  }
  if (!o.out.empty()) cfg.output.directory = o.out;
  if (auto v = te::validate(cfg); !v.empty()) {
    code = report_issues(v);
    return std::nullopt;
  }
  return cfg;
}

int run(te::Command command, const Options& o) {
  int code = 0;
  auto cfg = load(o, code);
  if (!cfg) return code;

  std::optional<std::vector<te::DetectorMomentum>> detector;
  if (!o.input.empty()) {
    try {
      detector.emplace();
      for (const auto& [pz, prho] : te::read_two_columns(o.input)) detector->push_back({pz, prho});
    } catch (const te::ComputeError& e) {
      return report_issues({std::string("input: ") + e.what()});
    }
  }

  std::optional<std::filesystem::path> stage_input;
  if (!o.stage_input.empty()) stage_input = o.stage_input;
  te::Pipeline pipeline(*cfg, stage_input);
  const te::PipelineOutcome outcome = pipeline.run(command, detector ? &*detector : nullptr);
  if (outcome.exit_code != 0) {
    std::cerr << "error: stage " << outcome.failed_stage << ": " << outcome.message << "\n";
    return outcome.exit_code;
  }
  std::cout << pipeline.manifest_path().string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tunnel ionization: TDSE, Wigner/QMF analysis, trajectories and exit reconstruction"};
  app.require_subcommand(1);
  Options o;
  int code = 0;

  auto add_common = [&](CLI::App* sub, bool outputs) {
    sub->add_option("--config", o.config, "Run configuration file")->required()->check(CLI::ExistingFile);
    if (!outputs) return;
    sub->add_option("--out", o.out, "Output directory (overrides output.directory)");
    sub->add_option("--stage-input", o.stage_input, "Manifest of an earlier run whose products are reused")
        ->check(CLI::ExistingFile);
  };

  const std::pair<const char*, te::Command> stages[] = {
      {"groundstate", te::Command::GroundState}, {"propagate", te::Command::Propagate},
      {"wigner", te::Command::Wigner},           {"qmf", te::Command::Qmf},
      {"trajectories", te::Command::Trajectories}, {"reconstruct", te::Command::Reconstruct},
      {"pipeline", te::Command::Pipeline},
  };
  for (const auto& [name, command] : stages) {
    CLI::App* sub = app.add_subcommand(name, "Run the " + std::string(name) + " stage and what it needs");
    add_common(sub, true);
    if (command == te::Command::Reconstruct || command == te::Command::Pipeline)
      sub->add_option("--input", o.input, "Detector momenta: two whitespace-separated columns p_z p_rho")
          ->check(CLI::ExistingFile);
    const te::Command c = command;
    sub->callback([&, c] { code = run(c, o); });
  }

  CLI::App* check = app.add_subcommand("validate-config", "Check a configuration and print its canonical form");
  add_common(check, false);
  check->callback([&] {
    if (auto cfg = load(o, code)) {
      std::cout << te::serialize_config(*cfg);
      std::cout << "# config_digest = " << te::config_digest(*cfg) << "\n";
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return code;
}
