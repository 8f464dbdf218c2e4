#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(DUALPG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dualpg_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("simulate writes one directory per seed and is reproducible") {
  const fs::path a = scratch("sim_a"), b = scratch("sim_b");
  REQUIRE(cli("simulate --seeds 1,2 -s track.laps=1 -o " + a.string()) == 0);
  REQUIRE(cli("simulate --seeds 1 -s track.laps=1 -o " + b.string()) == 0);
  CHECK(fs::is_directory(a / "seed_0001"));
  CHECK(fs::is_directory(a / "seed_0002"));
  for (const char* f : {"odometry.jsonl", "detections.jsonl", "gates.json", "groundtruth.tum"}) {
    CHECK(fs::exists(a / "seed_0001" / f));
    CHECK(slurp(a / "seed_0001" / f) == slurp(b / "seed_0001" / f));
  }
}

TEST_CASE("run, plot-data and dump-graph") {
  const fs::path sim = scratch("run_sim"), out = scratch("run_out"), out2 = scratch("run_out2");
  REQUIRE(cli("simulate --seeds 3 -s track.laps=1 -o " + sim.string()) == 0);
  const fs::path in = sim / "seed_0003";
  REQUIRE(cli("run -i " + in.string() + " -o " + out.string()) == 0);
  REQUIRE(cli("run -i " + in.string() + " -o " + out2.string()) == 0);
  for (const char* f : {"corrected.tum", "raw.tum", "diagnostics.jsonl", "metrics.json"}) {
    CHECK(fs::exists(out / f));
  }
  CHECK(slurp(out / "corrected.tum") == slurp(out2 / "corrected.tum"));

  REQUIRE(cli("plot-data -r " + out.string() + " -i " + in.string()) == 0);
  for (const char* f : {"raw_xy.csv", "corrected_xy.csv", "gt_xy.csv", "gates.csv"}) {
    CHECK(fs::exists(out / f));
  }
  CHECK(lines(out / "gates.csv") == 1 + 7);  // header + one row per gate

  // Without ground truth only raw and corrected series are emitted.
  const fs::path bare = scratch("plot_bare");
  fs::create_directories(bare);
  fs::copy_file(in / "gates.json", bare / "gates.json");
  REQUIRE(cli("plot-data -r " + out.string() + " -i " + bare.string() + " -o " + bare.string()) == 0);
  CHECK(fs::exists(bare / "raw_xy.csv"));
  CHECK_FALSE(fs::exists(bare / "gt_xy.csv"));

  const fs::path g = out / "graph.txt";
  CHECK(cli("dump-graph -i " + in.string() + " -o " + g.string()) == 0);
  CHECK(fs::file_size(g) > 0);
}

TEST_CASE("exit codes") {
  const fs::path d = scratch("codes");
  CHECK(cli("simulate -s dual.d_temp=3 -s dual.d_main=2 -o " + d.string()) == 2);
  CHECK(cli("simulate -s no.such.key=1 -o " + d.string()) == 2);
  CHECK(cli("frobnicate") == 2);
  fs::create_directories(d / "in");
  std::ofstream(d / "in" / "odometry.jsonl") << "{\"t\": 0, \"p\": [0,0,0], \"q\": [0,0,0,1]}\nbroken\n";
  std::ofstream(d / "in" / "detections.jsonl") << "";
  std::ofstream(d / "in" / "gates.json") << "[{\"id\": 0, \"p\": [1,0,0], \"q\": [0,0,0,1]}]";
  CHECK(cli("run -i " + (d / "in").string() + " -o " + (d / "out").string()) == 3);
  CHECK(cli("run -i " + (d / "missing").string() + " -o " + (d / "out").string()) == 3);
  CHECK(cli("ablate --grid '' -o " + (d / "ab").string()) == 2);
}
