#include <doctest.h>

#include <algorithm>
#include <string>

#include "tunnelexit/config.hpp"

using namespace tunnelexit;

namespace {

bool mentions(const std::vector<std::string>& items, const std::string& text) {
  return std::any_of(items.begin(), items.end(), [&](const std::string& s) { return s.find(text) != std::string::npos; });
}

}  // namespace

TEST_CASE("defaults are a valid desk run") {
  const RunConfig c;
  CHECK(validate(c).empty());
  CHECK(c.pulse.omega == 0.057);
  CHECK(c.trajectories.compare_times == std::vector<double>{150.0, 160.0, 170.0});
}

TEST_CASE("parse, serialize, parse is the identity") {
  ConfigIssues issues;
  const RunConfig a = parse_config(R"(
# comment line
pulse.E0 = 0.1   # trailing comment
pulse.omega = 0.123456789012345678
potential.kind = soft_core
potential.a = 0.75
grid.n_z = 201
grid.z_min = -20
grid.z_max = 20
propagation.snapshot_times = 0, 1.5, 3
propagation.t_end = 3
propagation.absorber.kind = mask
propagation.absorber.width = 4
phase_space.reduction_mode = amplitude_integrated
phase_space.zeta_sampling = grid
trajectories.families = simple_man, qmf_seeded_coulomb
trajectories.magnetic_term = false
trajectories.exit_times = 1.5
trajectories.compare_times = 3
reconstruction.prior_model = zero_exit
output.directory = somewhere else
)",
                                   issues);
  REQUIRE(issues.empty());
  const std::string text = serialize_config(a);
  ConfigIssues again;
  const RunConfig b = parse_config(text, again);
  CHECK(again.empty());
  CHECK(serialize_config(b) == text);
  CHECK(b.pulse.omega == a.pulse.omega);
  CHECK(b.potential.kind == PotentialKind::SoftCore);
  CHECK(b.output.directory == "somewhere else");
  CHECK(b.trajectories.families == std::vector<Family>{Family::SimpleMan, Family::QmfSeededCoulomb});
  CHECK_FALSE(b.trajectories.magnetic_term);
  CHECK(config_digest(a) == config_digest(b));
}

TEST_CASE("every problem is reported with its key") {
  ConfigIssues issues;
  parse_config("pulse.E0 = 0.1\npulse.E0 = 0.2\nno.such.key = 3\ngrid.n_z = many\npotential.kind = yukawa\nnonsense\n",
               issues);
  CHECK(issues.items.size() == 5);
  CHECK(mentions(issues.items, "pulse.E0: given more than once (line 2)"));
  CHECK(mentions(issues.items, "no.such.key: unknown key (line 3)"));
  CHECK(mentions(issues.items, "grid.n_z:"));
  CHECK(mentions(issues.items, "potential.kind:"));
  CHECK(mentions(issues.items, "line 6: expected 'key = value'"));
}

TEST_CASE("validation collects every violated constraint") {
  RunConfig c;
  c.grid.n_z = 4;
  c.pulse.omega = -1.0;
  c.output.precision = 30;
  c.threads = 0;
  const auto issues = validate(c);
  CHECK(mentions(issues, "grid.n_z: must be ≥ 8"));
  CHECK(mentions(issues, "pulse.omega"));
  CHECK(mentions(issues, "output.precision"));
  CHECK(mentions(issues, "run.threads"));
  CHECK(issues.size() >= 4);
}

TEST_CASE("seeded families need exit times on snapshots") {
  RunConfig c;
  c.trajectories.exit_times = {147.0};
  CHECK(mentions(validate(c), "trajectories.exit_times"));
  c.trajectories.families = {Family::SimpleMan};
  CHECK_FALSE(mentions(validate(c), "trajectories.exit_times"));
  c.trajectories.compare_times = {151.0};
  CHECK(mentions(validate(c), "trajectories.compare_times"));
}

TEST_CASE("digest ignores the output directory only") {
  RunConfig a, b;
  b.output.directory = "elsewhere";
  CHECK(config_digest(a) == config_digest(b));
  CHECK(config_digest(a).size() == 64);
  b.pulse.E0 = 0.0950000000001;
  CHECK(config_digest(a) != config_digest(b));
}

TEST_CASE("shipped configs validate") {
  for (const char* name : {"desk.cfg", "smoke.cfg"}) {
    ConfigIssues issues;
    const RunConfig c = load_config(std::string(TE_SOURCE_DIR) + "/configs/" + name, issues);
    CHECK_MESSAGE(issues.empty(), name);
    CHECK_MESSAGE(validate(c).empty(), name);
  }
  ConfigIssues missing;
  load_config("/nonexistent/x.cfg", missing);
  CHECK(mentions(missing.items, "cannot read"));
}
