// Trajectory metrics: rigid alignment, absolute trajectory error, gate
// crossing correction magnitudes and optimizer timing percentiles.
#pragma once

#include "dualpg/dual_manager.hpp"
#include "dualpg/simulator.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dualpg {

struct StampMatch {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (est index, gt index)
  std::size_t unmatched = 0;
};

/// Nearest-stamp association; estimate samples farther than `tolerance` from
/// every ground-truth stamp are dropped and counted. Both inputs must be
/// sorted by stamp.
StampMatch associate_stamps(const Trajectory& est, const Trajectory& gt, double tolerance);

/// Least-squares rigid transform T minimizing sum |T * est_i - gt_i|^2.
/// Throws DegenerateError for fewer than 3 points or collinear targets.
Pose align_se3(std::span<const Vec3> est, std::span<const Vec3> gt);

struct AteResult {
  double trans_rmse = 0.0;  // m
  double rot_rmse = 0.0;    // deg
  Pose alignment;
  std::size_t matched = 0;
  std::size_t unmatched = 0;
};

AteResult ate(const Trajectory& est, const Trajectory& gt, double tolerance);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // population
  int count = 0;
};

Stat mean_std(std::span<const double> values);

struct CorrectionReport {
  std::vector<Stat> laps;
  Stat overall;
  /// (lap, gate id) pairs never approached within the approach radius.
  std::vector<std::pair<int, int>> excluded;
  std::vector<std::vector<double>> per_lap_values;
};

/// For every gate and lap, the distance between the corrected sample closest
/// to the gate and the raw odometry sample at the same stamp.
CorrectionReport gate_crossing_correction(const Trajectory& corrected, const Trajectory& raw,
                                          std::span<const GatePrior> gates,
                                          std::span<const double> lap_stamps,
                                          double approach_radius);

/// Nearest-rank percentile (p in (0, 100]); 0 for an empty input.
double percentile(std::vector<double> values, double p);

std::uint64_t fnv1a(std::string_view text);
std::string hex64(std::uint64_t value);

struct MetricsReport {
  std::optional<AteResult> corrected_ate;
  std::optional<AteResult> raw_ate;
  std::optional<CorrectionReport> correction;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t detection_edges = 0;
  std::size_t keyframes = 0;
  std::size_t landmarks = 0;
  long accepted_detections = 0;
  RejectionCounts rejected;
  double opt_p50_ms = 0.0;
  double opt_p95_ms = 0.0;
  std::vector<double> opt_times_ms;
  std::string config_hash;
  std::uint64_t seed = 0;
  bool single_graph = false;
};

struct RunArtifacts {
  Trajectory corrected;
  Trajectory raw;
  std::vector<KeyframeDiagnostics> diagnostics;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t detection_edges = 0;
  std::size_t keyframes = 0;
  std::size_t landmarks = 0;
  long accepted_detections = 0;
  RejectionCounts rejected;
};

struct EvaluationInputs {
  const Trajectory* ground_truth = nullptr;  // optional
  std::span<const GatePrior> gates;
  std::span<const double> lap_stamps;
  double stamp_tolerance = 1.0 / 60.0;
  double approach_radius = 8.0;
};

MetricsReport summarize(const RunArtifacts& run, const EvaluationInputs& inputs);

}  // namespace dualpg
