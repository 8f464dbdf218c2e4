#include "dualpg/errors.hpp"
#include "dualpg/experiment.hpp"
#include "dualpg/formats.hpp"

#include <doctest.h>

#include <sstream>

using namespace dualpg;

namespace {

SimRun small_run() {
  TrackSpec spec;
  spec.lap_count = 1;
  NoiseModel n;
  n.seed = 2;
  return simulate(spec, n);
}

}  // namespace

TEST_CASE("stream round trips are byte-identical") {
  const SimRun run = small_run();

  std::ostringstream o1, o2;
  write_odometry(o1, run.odometry);
  std::istringstream oi(o1.str());
  write_odometry(o2, read_odometry(oi));
  CHECK(o1.str() == o2.str());

  std::ostringstream d1, d2;
  write_detections(d1, run.detections);
  std::istringstream di(d1.str());
  const auto dets = read_detections(di);
  write_detections(d2, dets);
  CHECK(d1.str() == d2.str());
  CHECK(dets.size() == run.detections.size());

  std::ostringstream g1, g2;
  write_gates(g1, run.gates);
  std::istringstream gi(g1.str());
  write_gates(g2, read_gates(gi));
  CHECK(g1.str() == g2.str());

  std::ostringstream t1, t2;
  write_tum(t1, run.ground_truth, run.lap_stamps);
  std::istringstream ti(t1.str());
  const TumFile tum = read_tum(ti);
  write_tum(t2, tum.trajectory, tum.lap_stamps);
  CHECK(t1.str() == t2.str());
  CHECK(tum.lap_stamps == run.lap_stamps);
}

TEST_CASE("stream parse errors carry line numbers") {
  std::istringstream bad("{\"t\": 0, \"p\": [0,0,0], \"q\": [0,0,0,1]}\n{\"t\": 1, \"p\": [0,0]}\n");
  try {
    read_odometry(bad);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream backwards(
      "{\"t\": 1, \"p\": [0,0,0], \"q\": [0,0,0,1]}\n{\"t\": 0.5, \"p\": [0,0,0], \"q\": [0,0,0,1]}\n");
  CHECK_THROWS_AS(read_odometry(backwards), InputError);
  std::istringstream junk("not json\n");
  CHECK_THROWS_AS(read_detections(junk), InputError);

  std::istringstream point("{\"t\": 0, \"dets\": [{\"p\": [1,2,3]}]}\n");
  const auto d = read_detections(point);
  REQUIRE(d.size() == 1);
  CHECK(std::holds_alternative<Vec3>(d[0].detections[0].measurement));
}

TEST_CASE("experiment config") {
  const ExperimentConfig c = parse_config(
      "# comment\n"
      "track.shape = lemniscate\n"
      "dual.d_temp = 0.5   # trailing\n"
      "seeds = 1-3,7\n");
  CHECK(c.track.shape == TrackShape::Lemniscate);
  CHECK(c.dual.d_temp == 0.5);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3, 7});

  CHECK_THROWS_AS(parse_config("nope = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("dual.d_temp = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("dual.d_temp = 3\ndual.d_main = 2\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_seed_list("3-1"), ConfigError);

  ExperimentConfig a, b;
  CHECK(a.hash() == b.hash());
  b.seeds = {5, 6};
  b.output_dir = "elsewhere";
  CHECK(a.hash() == b.hash());
  b.set("dual.d_temp", "0.2");
  CHECK(a.hash() != b.hash());
  for (const std::string& key : ExperimentConfig::keys()) {
    ExperimentConfig r;
    CHECK_NOTHROW(r.set(key, a.get(key)));
    CHECK(r.get(key) == a.get(key));
  }
}

TEST_CASE("ablation grid") {
  const auto g = parse_grid("dual:2.0:0.5,single:0.5");
  REQUIRE(g.size() == 2);
  CHECK_FALSE(g[0].single_graph);
  CHECK(g[0].d_temp == 0.5);
  CHECK(g[1].single_graph);
  CHECK(g[1].d_main == 0.5);
  CHECK_THROWS_AS(parse_grid(""), ConfigError);
  CHECK_THROWS_AS(parse_grid("triple:1"), ConfigError);
  CHECK(default_grid().size() == 6);

  ExperimentConfig cfg;
  cfg.track.lap_count = 1;
  cfg.seeds = {1, 2, 3};
  const AblationResult r = run_ablation(cfg, parse_grid("dual:2.0:0.1,single:2.0"), 2);
  CHECK(r.details.size() == 6);
  CHECK(r.summary.size() == 2);
  const std::string csv = ablation_summary_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.rfind("graph,d_main,d_temp,ate_m,nodes,edges,p95_ms", 0) == 0);
  const std::string detail = ablation_detail_csv(r);
  CHECK(std::count(detail.begin(), detail.end(), '\n') == 7);
}

TEST_CASE("replay skips detections before the first odometry sample") {
  const SimRun run = small_run();
  Trajectory late(run.odometry.begin() + 10, run.odometry.end());
  DualGraphConfig cfg;
  const RunArtifacts a = replay(cfg, run.gates, late, run.detections);
  CHECK(a.corrected.size() == late.size());
  CHECK(a.raw.size() == late.size());
}
