// dualpg command line: simulate, run, ablate, plot-data, dump-graph.
//
// Exit codes: 0 ok, 2 configuration error, 3 input error, 4 runtime failure.
#include "dualpg/errors.hpp"
#include "dualpg/experiment.hpp"
#include "dualpg/formats.hpp"
#include "dualpg/graph_io.hpp"
#include "dualpg/text.hpp"

#include <optional>
#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dualpg;

namespace {

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string seeds;
  std::string shape;
  double d_main = 0.0;
  double d_temp = 0.0;
  bool single_graph = false;
  int jobs = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_file, "key = value configuration file");
  cmd->add_option("-s,--set", o.overrides, "override a configuration key (KEY=VALUE)");
  cmd->add_option("--seeds", o.seeds, "seed list, e.g. 1-20 or 1,4,9");
  cmd->add_option("--shape", o.shape, "track shape: ellipse | lemniscate");
  cmd->add_option("--d-main", o.d_main, "main-graph keyframe distance (m)");
  cmd->add_option("--d-temp", o.d_temp, "temporary-graph node spacing (m)");
  cmd->add_flag("--single-graph", o.single_graph, "add raw detections to the main graph");
}

ExperimentConfig build_config(const CommonOptions& o) {
  ExperimentConfig cfg = o.config_file.empty() ? ExperimentConfig{} : load_config(o.config_file);
  for (const std::string& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.seeds.empty()) cfg.seeds = parse_seed_list(o.seeds);
  if (!o.shape.empty()) cfg.set("track.shape", o.shape);
  if (o.d_main > 0) cfg.dual.d_main = o.d_main;
  if (o.d_temp > 0) cfg.dual.d_temp = o.d_temp;
  if (o.single_graph) cfg.dual.single_graph_mode = true;
  cfg.validate();
  return cfg;
}

std::string seed_dir_name(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seed_%04llu", static_cast<unsigned long long>(seed));
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir.string());
}

template <class Fn>
std::string to_text(Fn&& fn) {
  std::ostringstream out;
  fn(out);
  return out.str();
}

void write_sim_run(const fs::path& dir, const SimRun& run) {
  ensure_dir(dir);
  write_text_file(dir / "odometry.jsonl", to_text([&](std::ostream& o) { write_odometry(o, run.odometry); }));
  write_text_file(dir / "detections.jsonl",
                  to_text([&](std::ostream& o) { write_detections(o, run.detections); }));
  write_text_file(dir / "gates.json", to_text([&](std::ostream& o) { write_gates(o, run.gates); }));
  write_text_file(dir / "groundtruth.tum",
                  to_text([&](std::ostream& o) { write_tum(o, run.ground_truth, run.lap_stamps); }));
}

struct StreamPaths {
  std::string input;
  std::string odometry;
  std::string detections;
  std::string gates;
  std::string groundtruth;

  fs::path resolve(const std::string& explicit_path, const char* name) const {
    if (!explicit_path.empty()) return explicit_path;
    if (input.empty()) throw ConfigError(std::string("no --input directory and no --") + name + " file");
    return fs::path(input) / name;
  }
};

void add_streams(CLI::App* cmd, StreamPaths& p) {
  cmd->add_option("-i,--input", p.input, "directory with odometry.jsonl, detections.jsonl, gates.json");
  cmd->add_option("--odometry", p.odometry, "odometry JSON lines");
  cmd->add_option("--detections", p.detections, "detection JSON lines");
  cmd->add_option("--gates", p.gates, "gate map JSON");
  cmd->add_option("--groundtruth", p.groundtruth, "ground truth TUM file (optional)");
}

struct LoadedStreams {
  Trajectory odometry;
  std::vector<DetectionBatch> detections;
  std::vector<GatePrior> gates;
  std::optional<TumFile> groundtruth;
};

template <class Fn>
auto parse_file(const fs::path& path, Fn&& parse) {
  std::istringstream in(read_text_file(path));
  try {
    return parse(in);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

LoadedStreams load_streams(const StreamPaths& p) {
  LoadedStreams s;
  s.odometry = parse_file(p.resolve(p.odometry, "odometry.jsonl"), read_odometry);
  s.detections = parse_file(p.resolve(p.detections, "detections.jsonl"), read_detections);
  s.gates = parse_file(p.resolve(p.gates, "gates.json"), read_gates);
  fs::path gt = p.groundtruth;
  if (gt.empty() && !p.input.empty()) gt = fs::path(p.input) / "groundtruth.tum";
  if (!gt.empty() && fs::exists(gt)) s.groundtruth = parse_file(gt, read_tum);
  if (s.odometry.empty()) throw InputError("odometry stream is empty");
  return s;
}

int cmd_simulate(const CommonOptions& o, const std::string& out) {
  const ExperimentConfig cfg = build_config(o);
  const fs::path root = out.empty() ? cfg.output_dir : fs::path(out);
  std::vector<SimRun> runs(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), o.jobs, [&](std::size_t k) {
    NoiseModel noise = cfg.noise;
    noise.seed = cfg.seeds[k];
    runs[k] = simulate(cfg.track, noise);
  });
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const fs::path dir = root / seed_dir_name(cfg.seeds[k]);
    write_sim_run(dir, runs[k]);
    std::cout << dir.string() << '\n';
  }
  return 0;
}

int cmd_run(const CommonOptions& o, const StreamPaths& p, const std::string& out,
            const std::string& graph_out) {
  const ExperimentConfig cfg = build_config(o);
  const LoadedStreams s = load_streams(p);
  const fs::path dir = out.empty() ? cfg.output_dir : fs::path(out);
  ensure_dir(dir);

  Graph graph;
  const RunArtifacts art = replay(cfg.dual, s.gates, s.odometry, s.detections, &graph);
  EvaluationInputs inputs;
  if (s.groundtruth) {
    inputs.ground_truth = &s.groundtruth->trajectory;
    inputs.lap_stamps = s.groundtruth->lap_stamps;
  }
  inputs.gates = s.gates;
  inputs.stamp_tolerance = 0.5 / cfg.track.sample_rate;
  inputs.approach_radius = cfg.noise.det_range;
  MetricsReport metrics = summarize(art, inputs);
  metrics.config_hash = cfg.hash();
  metrics.single_graph = cfg.dual.single_graph_mode;
  metrics.seed = cfg.seeds.front();

  write_text_file(dir / "corrected.tum", to_text([&](std::ostream& os) { write_tum(os, art.corrected); }));
  write_text_file(dir / "raw.tum", to_text([&](std::ostream& os) { write_tum(os, art.raw); }));
  write_text_file(dir / "diagnostics.jsonl", to_text([&](std::ostream& os) {
                    for (const auto& d : art.diagnostics) os << diagnostics_record(d) << '\n';
                  }));
  write_text_file(dir / "metrics.json", metrics_json(metrics) + "\n");
  if (!graph_out.empty()) write_text_file(graph_out, dump_graph(graph));

  std::cout << "keyframes " << art.keyframes << ", detections accepted " << art.accepted_detections
            << ", main graph " << art.nodes << " nodes / " << art.edges << " edges\n";
  if (metrics.corrected_ate && metrics.raw_ate) {
    std::cout << "ATE corrected " << metrics.corrected_ate->trans_rmse << " m, raw "
              << metrics.raw_ate->trans_rmse << " m\n";
  }
  return 0;
}

int cmd_dump_graph(const CommonOptions& o, const StreamPaths& p, const std::string& out) {
  const ExperimentConfig cfg = build_config(o);
  const LoadedStreams s = load_streams(p);
  Graph graph;
  replay(cfg.dual, s.gates, s.odometry, s.detections, &graph);
  const std::string text = dump_graph(graph);
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
  return 0;
}

int cmd_ablate(const CommonOptions& o, const std::optional<std::string>& grid_text, const std::string& out) {
  const ExperimentConfig cfg = build_config(o);
  const std::vector<AblationVariant> grid = grid_text ? parse_grid(*grid_text) : default_grid();
  const AblationResult result = run_ablation(cfg, grid, o.jobs);
  const fs::path dir = out.empty() ? cfg.output_dir : fs::path(out);
  ensure_dir(dir);
  const std::string summary = ablation_summary_csv(result);
  write_text_file(dir / "ablation.csv", summary);
  write_text_file(dir / "ablation_detail.csv", ablation_detail_csv(result));
  std::cout << summary;
  return 0;
}

std::string xy_csv(const Trajectory& traj, const Pose& align) {
  std::string out = "t,x,y\n";
  for (const StampedPose& s : traj) {
    const Vec3 p = align * s.pose.translation();
    append_double(out, s.t);
    out += ',';
    append_double(out, p.x());
    out += ',';
    append_double(out, p.y());
    out += '\n';
  }
  return out;
}

int cmd_plot_data(const std::string& run_dir, const std::string& input_dir, const std::string& out,
                  double gate_width) {
  const fs::path run = run_dir;
  const fs::path input = input_dir.empty() ? run : fs::path(input_dir);
  const fs::path dir = out.empty() ? run : fs::path(out);
  ensure_dir(dir);
  const TumFile raw = parse_file(run / "raw.tum", read_tum);
  const TumFile corrected = parse_file(run / "corrected.tum", read_tum);
  // Raw odometry and corrected output share the map frame at the first sample,
  // so they are plotted unaligned; ground truth is drawn as is.
  write_text_file(dir / "raw_xy.csv", xy_csv(raw.trajectory, Pose()));
  write_text_file(dir / "corrected_xy.csv", xy_csv(corrected.trajectory, Pose()));
  if (fs::exists(input / "groundtruth.tum")) {
    const TumFile gt = parse_file(input / "groundtruth.tum", read_tum);
    write_text_file(dir / "gt_xy.csv", xy_csv(gt.trajectory, Pose()));
  }
  if (fs::exists(input / "gates.json")) {
    const std::vector<GatePrior> gates = parse_file(input / "gates.json", read_gates);
    std::string csv = "id,x,y,yaw,x1,y1,x2,y2\n";
    for (const GatePrior& g : gates) {
      const Vec3& c = g.pose.translation();
      const double yaw = yaw_of(g.pose.rotation());
      // The gate frame spans the body y axis.
      const Vec3 half = 0.5 * gate_width * Vec3(-std::sin(yaw), std::cos(yaw), 0.0);
      csv += std::to_string(g.semantic_id);
      for (double v : {c.x(), c.y(), yaw, c.x() - half.x(), c.y() - half.y(), c.x() + half.x(),
                       c.y() + half.y()}) {
        csv += ',';
        append_double(csv, v);
      }
      csv += '\n';
    }
    write_text_file(dir / "gates.csv", csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual pose-graph localization backend"};
  app.require_subcommand(1);

  CommonOptions common;
  StreamPaths streams;
  std::string out, graph_out, run_dir, input_dir;
  std::optional<std::string> grid;
  double gate_width = 1.5;

  auto* sim = app.add_subcommand("simulate", "generate seeded racing scenarios");
  add_common(sim, common);
  sim->add_option("-o,--out", out, "output directory (one seed_NNNN subdirectory per seed)");
  sim->add_option("-j,--jobs", common.jobs, "worker threads (default: all cores)");

  auto* run = app.add_subcommand("run", "replay streams through the localization backend");
  add_common(run, common);
  add_streams(run, streams);
  run->add_option("-o,--out", out, "output directory");
  run->add_option("--dump-graph", graph_out, "also write the final main graph to this file");

  auto* ablate = app.add_subcommand("ablate", "dual vs single graph comparison over seeds");
  add_common(ablate, common);
  ablate->add_option("--grid", grid, "variants, e.g. dual:2.0:0.5,single:2.0 (default: six-row grid)");
  ablate->add_option("-o,--out", out, "output directory");
  ablate->add_option("-j,--jobs", common.jobs, "worker threads (default: all cores)");

  auto* plot = app.add_subcommand("plot-data", "XY series and gate segments as CSV");
  plot->add_option("-r,--run", run_dir, "run output directory")->required();
  plot->add_option("-i,--input", input_dir, "directory with groundtruth.tum / gates.json (default: run dir)");
  plot->add_option("-o,--out", out, "output directory (default: run dir)");
  plot->add_option("--gate-width", gate_width, "gate width for the drawn segments (m)");

  auto* dump = app.add_subcommand("dump-graph", "replay streams and print the final main graph");
  add_common(dump, common);
  add_streams(dump, streams);
  dump->add_option("-o,--out", out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) return cmd_simulate(common, out);
    if (*run) return cmd_run(common, streams, out, graph_out);
    if (*ablate) return cmd_ablate(common, grid, out);
    if (*plot) return cmd_plot_data(run_dir, input_dir, out, gate_width);
    if (*dump) return cmd_dump_graph(common, streams, out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 4;
}
