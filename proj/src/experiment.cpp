#include "dualpg/experiment.hpp"

#include "dualpg/errors.hpp"
#include "dualpg/formats.hpp"
#include "dualpg/text.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace dualpg {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& value) {
  double v;
  if (!parse_double(value, v) || !std::isfinite(v)) {
    throw ConfigError("key '" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

int to_int(const std::string& key, const std::string& value) {
  int v;
  if (!parse_int(value, v)) throw ConfigError("key '" + key + "' expects an integer, got '" + value + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("key '" + key + "' expects a boolean, got '" + value + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

struct KeyDef {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  bool hashed = true;
};

#define DUALPG_NUM(NAME, FIELD)                                                              \
  KeyDef {                                                                                   \
    NAME, [](ExperimentConfig& c, const std::string& k, const std::string& v) {              \
      c.FIELD = to_double(k, v);                                                             \
    },                                                                                       \
        [](const ExperimentConfig& c) { return format_double(c.FIELD); }                     \
  }
#define DUALPG_INT(NAME, FIELD)                                                                  \
  KeyDef {                                                                                       \
    NAME, [](ExperimentConfig& c, const std::string& k, const std::string& v) {                  \
      c.FIELD = to_int(k, v);                                                                    \
    },                                                                                           \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                        \
  }
#define DUALPG_BOOL(NAME, FIELD)                                                                  \
  KeyDef {                                                                                        \
    NAME, [](ExperimentConfig& c, const std::string& k, const std::string& v) {                   \
      c.FIELD = to_bool(k, v);                                                                    \
    },                                                                                            \
        [](const ExperimentConfig& c) { return from_bool(c.FIELD); }                              \
  }

// Solver keys without a graph prefix apply to both solvers.
#define DUALPG_SOLVER(NAME, FIELD)                                                     \
  KeyDef {                                                                             \
    NAME, [](ExperimentConfig& c, const std::string& k, const std::string& v) {        \
      c.dual.temp_solver.FIELD = c.dual.main_solver.FIELD = to_double(k, v);           \
    },                                                                                 \
        [](const ExperimentConfig& c) { return format_double(c.dual.main_solver.FIELD); } \
  }

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      {"track.shape",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.track.shape = track_shape_from_string(v);
       },
       [](const ExperimentConfig& c) { return to_string(c.track.shape); }},
      DUALPG_NUM("track.a", track.a),
      DUALPG_NUM("track.b", track.b),
      DUALPG_INT("track.gates", track.gate_count),
      DUALPG_INT("track.laps", track.lap_count),
      DUALPG_NUM("track.speed", track.speed),
      DUALPG_NUM("track.rate", track.sample_rate),
      DUALPG_NUM("track.height", track.gate_height),
      DUALPG_NUM("noise.odom_trans_sigma", noise.odom_trans_sigma),
      DUALPG_NUM("noise.odom_rot_sigma", noise.odom_rot_sigma),
      DUALPG_NUM("noise.bias", noise.odom_bias_drift),
      DUALPG_NUM("noise.det_pos_sigma", noise.det_pos_sigma),
      DUALPG_NUM("noise.det_rot_sigma", noise.det_rot_sigma),
      DUALPG_NUM("noise.det_range", noise.det_range),
      DUALPG_NUM("noise.det_fov", noise.det_fov),
      DUALPG_NUM("noise.dropout", noise.det_dropout),
      DUALPG_NUM("dual.d_main", dual.d_main),
      DUALPG_NUM("dual.d_temp", dual.d_temp),
      DUALPG_NUM("dual.d_rot_main", dual.d_rot_main),
      DUALPG_BOOL("dual.single_graph", dual.single_graph_mode),
      {"dual.landmark_kind",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         if (v == "pose") c.dual.landmark_kind = LandmarkKind::Pose;
         else if (v == "point") c.dual.landmark_kind = LandmarkKind::Point;
         else throw ConfigError("key '" + k + "' expects pose|point, got '" + v + "'");
       },
       [](const ExperimentConfig& c) {
         return std::string(c.dual.landmark_kind == LandmarkKind::Pose ? "pose" : "point");
       }},
      {"dual.information",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         if (v == "marginal") c.dual.information_mode = InformationMode::Marginal;
         else if (v == "edge_sum") c.dual.information_mode = InformationMode::EdgeSum;
         else throw ConfigError("key '" + k + "' expects marginal|edge_sum, got '" + v + "'");
       },
       [](const ExperimentConfig& c) {
         return std::string(c.dual.information_mode == InformationMode::Marginal ? "marginal"
                                                                                 : "edge_sum");
       }},
      DUALPG_BOOL("dual.temp_priors", dual.temp_graph_priors),
      DUALPG_INT("solver.temp.max_iterations", dual.temp_solver.max_iterations),
      DUALPG_INT("solver.main.max_iterations", dual.main_solver.max_iterations),
      DUALPG_SOLVER("solver.lambda_init", lambda_init),
      DUALPG_SOLVER("solver.lambda_up", lambda_up),
      DUALPG_SOLVER("solver.lambda_down", lambda_down),
      DUALPG_SOLVER("solver.chi2_rel_tol", chi2_rel_tol),
      DUALPG_SOLVER("solver.step_norm_tol", step_norm_tol),
      DUALPG_NUM("assoc.max_distance", dual.association.max_match_distance),
      DUALPG_NUM("assoc.max_yaw", dual.association.max_yaw_error),
      DUALPG_BOOL("assoc.allow_reverse", dual.association.allow_reverse),
      DUALPG_NUM("info.odom_trans", dual.information.odometry_trans),
      DUALPG_NUM("info.odom_rot", dual.information.odometry_rot),
      DUALPG_NUM("info.det_trans", dual.information.detection_trans),
      DUALPG_NUM("info.det_rot", dual.information.detection_rot),
      DUALPG_NUM("info.det_point", dual.information.detection_point),
      DUALPG_NUM("info.prior", dual.information.prior),
      {"output",
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
       [](const ExperimentConfig& c) { return c.output_dir.string(); }, false},
      {"seeds",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.seeds = parse_seed_list(v);
       },
       [](const ExperimentConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.seeds.size(); ++i) {
           if (i) s += ',';
           s += std::to_string(c.seeds[i]);
         }
         return s;
       },
       false},
  };
  return table;
}

#undef DUALPG_NUM
#undef DUALPG_INT
#undef DUALPG_BOOL
#undef DUALPG_SOLVER

const KeyDef& find_key(const std::string& key) {
  for (const KeyDef& k : key_table()) {
    if (key == k.name) return k;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  find_key(key).set(*this, key, trim(value));
}

std::string ExperimentConfig::get(const std::string& key) const { return find_key(key).get(*this); }

std::vector<std::string> ExperimentConfig::keys() {
  std::vector<std::string> out;
  for (const KeyDef& k : key_table()) out.emplace_back(k.name);
  return out;
}

void ExperimentConfig::validate() const {
  track.validate();
  noise.validate();
  dual.validate();
  if (seeds.empty()) throw ConfigError("seed list is empty");
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const KeyDef& k : key_table()) {
    if (!k.hashed) continue;
    out += k.name;
    out += '=';
    out += k.get(*this);
    out += '\n';
  }
  return out;
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a(canonical())); }

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      cfg.set(trim(body.substr(0, eq)), body.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const InputError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_config(text);
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  std::string s(text);
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    const auto dash = part.find('-');
    std::uint64_t lo, hi;
    if (dash == std::string::npos) {
      if (!parse_int(part, lo)) throw ConfigError("bad seed '" + part + "'");
      hi = lo;
    } else if (!parse_int(trim(part.substr(0, dash)), lo) ||
               !parse_int(trim(part.substr(dash + 1)), hi) || hi < lo) {
      throw ConfigError("bad seed range '" + part + "'");
    }
    for (std::uint64_t v = lo; v <= hi; ++v) out.push_back(v);
  }
  if (out.empty()) throw ConfigError("seed list is empty");
  return out;
}

RunArtifacts replay(const DualGraphConfig& config, std::span<const GatePrior> gates,
                    const Trajectory& odometry, const std::vector<DetectionBatch>& detections,
                    Graph* final_graph) {
  DualGraphManager manager(config, gates);
  RunArtifacts out;
  out.raw = odometry;
  out.corrected.reserve(odometry.size());
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < odometry.size() || j < detections.size()) {
    if (i < odometry.size() && (j == detections.size() || odometry[i].t <= detections[j].t)) {
      out.corrected.push_back({odometry[i].t, manager.process_odometry(odometry[i].t, odometry[i].pose)});
      ++i;
    } else {
      if (i > 0) manager.process_detections(detections[j].t, detections[j].detections);
      ++j;
    }
  }
  manager.finish();
  const Graph& g = manager.main_graph();
  out.diagnostics = manager.diagnostics();
  out.nodes = g.node_count();
  out.edges = g.edge_count();
  out.detection_edges = g.detection_edge_count();
  out.keyframes = manager.keyframe_count();
  out.landmarks = g.landmark_count();
  out.accepted_detections = manager.accepted_detections();
  out.rejected = manager.rejections();
  if (final_graph) *final_graph = g;
  return out;
}

SimulatedRun run_simulated(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  SimulatedRun run;
  NoiseModel noise = config.noise;
  noise.seed = seed;
  run.sim = simulate(config.track, noise);
  run.artifacts = replay(config.dual, run.sim.gates, run.sim.odometry, run.sim.detections);
  EvaluationInputs inputs;
  inputs.ground_truth = &run.sim.ground_truth;
  inputs.gates = run.sim.gates;
  inputs.lap_stamps = run.sim.lap_stamps;
  inputs.stamp_tolerance = 0.5 / config.track.sample_rate;
  inputs.approach_radius = config.noise.det_range;
  run.metrics = summarize(run.artifacts, inputs);
  run.metrics.seed = seed;
  run.metrics.config_hash = config.hash();
  run.metrics.single_graph = config.dual.single_graph_mode;
  return run;
}

std::string AblationVariant::label() const {
  std::string s = single_graph ? "single:" : "dual:";
  s += format_double(d_main);
  if (!single_graph) {
    s += ':';
    s += format_double(d_temp);
  }
  return s;
}

std::vector<AblationVariant> parse_grid(std::string_view text) {
  std::vector<AblationVariant> out;
  std::istringstream in{std::string(text)};
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::vector<std::string> parts;
    std::istringstream p(item);
    std::string tok;
    while (std::getline(p, tok, ':')) parts.push_back(trim(tok));
    AblationVariant v;
    const auto num = [&](const std::string& s) {
      double d;
      if (!parse_double(s, d) || !(d > 0)) throw ConfigError("bad grid entry '" + item + "'");
      return d;
    };
    if (parts.size() == 3 && parts[0] == "dual") {
      v.d_main = num(parts[1]);
      v.d_temp = num(parts[2]);
    } else if (parts.size() == 2 && parts[0] == "single") {
      v.single_graph = true;
      v.d_main = num(parts[1]);
      v.d_temp = std::min(v.d_temp, v.d_main);
    } else {
      throw ConfigError("bad grid entry '" + item + "' (use dual:D_MAIN:D_TEMP or single:D_MAIN)");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("ablation grid is empty");
  return out;
}

std::vector<AblationVariant> default_grid() {
  return parse_grid("dual:2.0:0.5,dual:2.0:0.1,dual:0.5:0.1,single:2.0,single:0.5,single:0.1");
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

AblationResult run_ablation(const ExperimentConfig& base, const std::vector<AblationVariant>& grid,
                            int jobs) {
  if (grid.empty()) throw ConfigError("ablation grid is empty");
  base.validate();
  std::vector<ExperimentConfig> configs;
  for (const AblationVariant& v : grid) {
    ExperimentConfig c = base;
    c.dual.single_graph_mode = v.single_graph;
    c.dual.d_main = v.d_main;
    c.dual.d_temp = v.d_temp;
    c.validate();
    configs.push_back(std::move(c));
  }

  AblationResult result;
  const std::size_t seeds = base.seeds.size();
  result.details.resize(grid.size() * seeds);
  parallel_for(result.details.size(), jobs, [&](std::size_t k) {
    AblationDetail& d = result.details[k];
    d.variant = grid[k / seeds];
    d.seed = base.seeds[k % seeds];
    try {
      d.metrics = run_simulated(configs[k / seeds], d.seed).metrics;
    } catch (const std::exception& e) {
      d.error = e.what();
    }
  });

  for (std::size_t v = 0; v < grid.size(); ++v) {
    AblationSummary s;
    s.variant = grid[v];
    std::vector<double> ates, raw_ates, times;
    double nodes = 0.0, edges = 0.0;
    for (std::size_t k = v * seeds; k < (v + 1) * seeds; ++k) {
      const AblationDetail& d = result.details[k];
      if (!d.metrics) {
        ++s.failures;
        continue;
      }
      ++s.runs;
      if (d.metrics->corrected_ate) ates.push_back(d.metrics->corrected_ate->trans_rmse);
      if (d.metrics->raw_ate) raw_ates.push_back(d.metrics->raw_ate->trans_rmse);
      nodes += static_cast<double>(d.metrics->nodes);
      edges += static_cast<double>(d.metrics->edges);
      times.insert(times.end(), d.metrics->opt_times_ms.begin(), d.metrics->opt_times_ms.end());
    }
    s.median_ate = median(ates);
    s.median_raw_ate = median(raw_ates);
    if (s.runs) {
      s.mean_nodes = nodes / s.runs;
      s.mean_edges = edges / s.runs;
    }
    s.p95_ms = percentile(times, 95.0);
    result.summary.push_back(s);
  }
  return result;
}

std::string ablation_summary_csv(const AblationResult& result) {
  std::string out = "graph,d_main,d_temp,ate_m,nodes,edges,p95_ms,raw_ate_m,runs,failures\n";
  for (const AblationSummary& s : result.summary) {
    out += s.variant.single_graph ? "single," : "dual,";
    out += format_double(s.variant.d_main) + ',';
    out += s.variant.single_graph ? std::string() : format_double(s.variant.d_temp);
    out += ',' + format_double(s.median_ate) + ',' + format_double(s.mean_nodes) + ',' +
           format_double(s.mean_edges) + ',' + format_double(s.p95_ms) + ',' +
           format_double(s.median_raw_ate) + ',' + std::to_string(s.runs) + ',' +
           std::to_string(s.failures) + '\n';
  }
  return out;
}

std::string ablation_detail_csv(const AblationResult& result) {
  std::string out =
      "graph,d_main,d_temp,seed,ate_m,raw_ate_m,nodes,edges,detection_edges,keyframes,"
      "accepted_detections,p50_ms,p95_ms,error\n";
  for (const AblationDetail& d : result.details) {
    out += d.variant.single_graph ? "single," : "dual,";
    out += format_double(d.variant.d_main) + ',';
    out += d.variant.single_graph ? std::string() : format_double(d.variant.d_temp);
    out += ',' + std::to_string(d.seed) + ',';
    if (d.metrics) {
      const MetricsReport& m = *d.metrics;
      out += (m.corrected_ate ? format_double(m.corrected_ate->trans_rmse) : "") + ',';
      out += (m.raw_ate ? format_double(m.raw_ate->trans_rmse) : "") + ',';
      out += std::to_string(m.nodes) + ',' + std::to_string(m.edges) + ',' +
             std::to_string(m.detection_edges) + ',' + std::to_string(m.keyframes) + ',' +
             std::to_string(m.accepted_detections) + ',' + format_double(m.opt_p50_ms) + ',' +
             format_double(m.opt_p95_ms) + ',';
    } else {
      out += ",,,,,,,,,";
      std::string e = d.error;
      std::replace(e.begin(), e.end(), ',', ';');
      std::replace(e.begin(), e.end(), '\n', ' ');
      out += e;
    }
    out += '\n';
  }
  return out;
}

}  // namespace dualpg
