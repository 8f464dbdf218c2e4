// Experiment configuration, stream replay through the dual-graph manager,
// and the dual/single ablation harness.
#pragma once

#include "dualpg/dual_manager.hpp"
#include "dualpg/evaluation.hpp"
#include "dualpg/simulator.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dualpg {

/// Configuration file format: one `key = value` per line, `#` starts a
/// comment. Keys are listed by `ExperimentConfig::keys()`, e.g.
///   track.shape = lemniscate
///   dual.d_temp = 0.5
///   seeds = 1-20
struct ExperimentConfig {
  TrackSpec track;
  NoiseModel noise;
  DualGraphConfig dual;
  std::filesystem::path output_dir = "out";
  std::vector<std::uint64_t> seeds{1};

  /// Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  /// Cross-field validation of every section.
  void validate() const;
  /// Every key in a fixed order; input to the config hash.
  std::string canonical() const;
  /// Hash of the settings that influence a run (excludes seeds and output).
  std::string hash() const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// "1,3,5-8" -> {1,3,5,6,7,8}
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// Replays odometry and detections in stamp order (odometry first on ties).
/// Detections older than the first odometry sample are skipped.
RunArtifacts replay(const DualGraphConfig& config, std::span<const GatePrior> gates,
                    const Trajectory& odometry, const std::vector<DetectionBatch>& detections,
                    Graph* final_graph = nullptr);

struct SimulatedRun {
  SimRun sim;
  RunArtifacts artifacts;
  MetricsReport metrics;
};

SimulatedRun run_simulated(const ExperimentConfig& config, std::uint64_t seed);

struct AblationVariant {
  bool single_graph = false;
  double d_main = 2.0;
  double d_temp = 0.1;

  std::string label() const;
};

/// "dual:2.0:0.5,single:0.5" -> variants; throws ConfigError when malformed or empty.
std::vector<AblationVariant> parse_grid(std::string_view text);
/// The six-row dual/single comparison grid.
std::vector<AblationVariant> default_grid();

struct AblationDetail {
  AblationVariant variant;
  std::uint64_t seed = 0;
  std::optional<MetricsReport> metrics;
  std::string error;
};

struct AblationSummary {
  AblationVariant variant;
  int runs = 0;
  int failures = 0;
  double median_ate = 0.0;
  double median_raw_ate = 0.0;
  double mean_nodes = 0.0;
  double mean_edges = 0.0;
  double p95_ms = 0.0;  // pooled over every keyframe optimization of every seed
};

struct AblationResult {
  std::vector<AblationDetail> details;  // variant-major, then seed order
  std::vector<AblationSummary> summary;
};

AblationResult run_ablation(const ExperimentConfig& base, const std::vector<AblationVariant>& grid,
                            int jobs);

std::string ablation_summary_csv(const AblationResult& result);
std::string ablation_detail_csv(const AblationResult& result);

/// Runs task(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& task);

double median(std::vector<double> values);

}  // namespace dualpg
