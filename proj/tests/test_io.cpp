#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tunnelexit/error.hpp"
#include "tunnelexit/hash.hpp"
#include "tunnelexit/io.hpp"

using namespace tunnelexit;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("tunnelexit_io_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("complex array round trip") {
  const fs::path dir = fresh_dir("array");
  ProductWriter w(dir, "abc123", 17);
  CylGrid g;
  g.z_min = -2.0;
  g.z_max = 2.0;
  g.n_z = 5;
  g.rho_max = 3.0;
  g.n_rho = 3;
  std::vector<cplx> v(g.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = {0.1 * static_cast<double>(k), -1.0 / (1.0 + static_cast<double>(k))};
  ArrayMeta m = grid_meta(g, ElementKind::Complex128);
  m.params["time"] = "150";
  w.write_array("snapshot_t150", m, v);

  const ArrayData back = read_array(dir / "snapshot_t150.bin");
  CHECK(back.meta.name == "snapshot_t150");
  CHECK(back.meta.kind == ElementKind::Complex128);
  CHECK(back.meta.shape == std::vector<std::size_t>{5, 3});
  CHECK(back.meta.config_digest == "abc123");
  CHECK(back.meta.params.at("time") == "150");
  REQUIRE(back.meta.axes.size() == 2);
  CHECK(back.meta.axes[0].name == "z");
  CHECK(back.meta.axes[0].step == 1.0);
  CHECK(back.meta.axes[1].start == 0.5);
  CHECK(back.complex == v);
  CHECK(fs::file_size(dir / "snapshot_t150.bin") == 15 * 16);

  REQUIRE(w.records().size() == 2);
  for (const auto& r : w.records()) CHECK(r.sha256 == sha256_file(dir / r.file));
}

TEST_CASE("payload length must match the shape") {
  const fs::path dir = fresh_dir("short");
  ProductWriter w(dir, "d", 17);
  ArrayMeta m;
  m.shape = {4};
  w.write_array("x", m, std::vector<double>{1, 2, 3, 4});
  fs::resize_file(dir / "x.bin", 24);
  try {
    read_array(dir / "x.meta");
    FAIL("expected Io");
  } catch (const ComputeError& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
  CHECK_THROWS_AS(w.write_array("y", m, std::vector<double>{1, 2}), ComputeError);
}

TEST_CASE("table round trip with full precision") {
  const fs::path dir = fresh_dir("table");
  ProductWriter w(dir, "d", 17);
  const double third = 1.0 / 3.0;
  Table t{{"a comment"}, {"x", "y"}, {{w.format(third), w.format(std::nan(""))}, {w.format(-2.5e-300), w.format(1e300)}}};
  w.write_table("values", t);
  const Table back = read_table(dir / "values.tsv");
  CHECK(back.columns == std::vector<std::string>{"x", "y"});
  CHECK(back.comments.front() == "a comment");
  CHECK(back.number(0, "x") == third);
  CHECK(std::isnan(back.number(0, "y")));
  CHECK(back.number(1, "x") == -2.5e-300);
  CHECK_THROWS_AS(back.column("z"), ComputeError);
}

TEST_CASE("two-column detector input") {
  const fs::path dir = fresh_dir("detector");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "det.txt");
    f << "# p_z p_rho\n0.5 0.01\n\n-0.25\t0   # tab separated\n";
  }
  const auto rows = read_two_columns(dir / "det.txt");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].first == -0.25);
  {
    std::ofstream f(dir / "bad.txt");
    f << "0.5 0.01 3\n";
  }
  CHECK_THROWS_WITH_AS(read_two_columns(dir / "bad.txt"), doctest::Contains("line 1"), ComputeError);
}

TEST_CASE("timed names") {
  CHECK(timed_name("snapshot", 150.0) == "snapshot_t150");
  CHECK(timed_name("qmf", 45.5) == "qmf_t45.5");
}
