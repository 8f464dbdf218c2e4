// Dual pose-graph localization.
//
// Raw detections between two keyframes go into a short-lived temporary graph
// (one detection edge per observation). When the next keyframe is due, that
// graph is optimized and every observed gate is distilled into a single
// refined detection edge on the new main-graph keyframe. The main graph is
// then re-optimized and the map->odom correction refreshed.
#pragma once

#include "dualpg/association.hpp"
#include "dualpg/graph.hpp"
#include "dualpg/solver.hpp"

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace dualpg {

/// Diagonal information used when a stream carries no covariance.
struct InformationDefaults {
  double odometry_trans = 100.0;  // m^-2
  double odometry_rot = 400.0;    // rad^-2
  double detection_trans = 25.0;
  double detection_rot = 25.0;
  double detection_point = 25.0;
  double prior = 1e6;

  Mat6 odometry() const;
  Mat6 detection_pose() const;
  Mat3 detection_point_info() const;
  Mat6 prior_pose() const;
  Mat3 prior_point() const;
};

enum class InformationMode {
  Marginal,  // landmark marginal of the optimized temporary graph
  EdgeSum,   // sum of the raw edge informations, for comparison
};

struct DualGraphConfig {
  double d_main = 2.0;      // m
  double d_temp = 0.1;      // m
  double d_rot_main = 0.0;  // rad; 0 disables the rotational keyframe trigger
  SolverConfig temp_solver{.max_iterations = 10};
  SolverConfig main_solver{.max_iterations = 15};
  bool single_graph_mode = false;
  LandmarkKind landmark_kind = LandmarkKind::Pose;
  AssociationConfig association;
  InformationDefaults information;
  InformationMode information_mode = InformationMode::Marginal;
  /// Copy the map priors into the temporary graph as well.
  bool temp_graph_priors = false;

  void validate() const;
};

struct GatePrior {
  int semantic_id = 0;
  Pose pose;
};

struct RefinedConstraint {
  int semantic_id = 0;
  Observation observation;  // relative to the new keyframe
  int support_count = 0;
  bool fallback = false;
};

struct KeyframeDiagnostics {
  double stamp = 0.0;
  int keyframe = 0;
  std::size_t main_nodes = 0;
  std::size_t main_edges = 0;
  std::size_t main_detection_edges = 0;
  std::size_t main_landmarks = 0;
  std::size_t temp_nodes = 0;
  std::size_t temp_edges = 0;
  int raw_detections = 0;  // accepted since the previous keyframe
  int refined = 0;
  int fallbacks = 0;
  OptReport main_opt;
  double temp_opt_ms = 0.0;
  bool solver_error = false;
  double correction_norm = 0.0;
  RejectionCounts rejected;
  int kind_rejected = 0;
};

struct RegistryEntry {
  NodeId node;
  Pose prior;
};

class DualGraphManager {
 public:
  /// Throws ConfigError on an invalid config, an empty map or duplicate ids.
  DualGraphManager(const DualGraphConfig& config, std::span<const GatePrior> landmark_map);

  /// Returns the corrected pose, correction * raw_pose.
  Pose process_odometry(double stamp, const Pose& raw_pose);
  /// Returns the number of accepted detections.
  int process_detections(double stamp, std::span<const RawDetection> detections);

  /// Optimizes the temporary graph and distills one constraint per observed
  /// gate relative to a keyframe at the latest odometry pose. Discards the
  /// temporary graph.
  std::vector<RefinedConstraint> compress_temporary();
  /// Adds a keyframe at the latest odometry pose and re-optimizes the main graph.
  OptReport promote_keyframe();
  /// Flushes pending detections into a last keyframe (end of stream).
  void finish();

  const DualGraphConfig& config() const { return config_; }
  const Graph& main_graph() const { return main_; }
  const Graph* temporary_graph() const { return temp_ ? &temp_->graph : nullptr; }
  const Pose& correction() const { return correction_; }
  /// Overrides the map->odom correction (replay from a known alignment, tests).
  void set_correction(const Pose& correction) { correction_ = correction; }
  const std::map<int, RegistryEntry>& registry() const { return registry_; }
  const std::vector<KeyframeDiagnostics>& diagnostics() const { return diagnostics_; }

  std::size_t keyframe_count() const { return keyframes_.size(); }
  const std::vector<NodeId>& keyframes() const { return keyframes_; }
  long accepted_detections() const { return accepted_total_; }
  const RejectionCounts& rejections() const { return rejected_total_; }

 private:
  struct TemporaryGraph {
    Graph graph;
    NodeId anchor;
    Pose anchor_estimate;
    Pose anchor_raw;
    NodeId last_node;
    Pose last_raw;
    double last_stamp = 0.0;
    bool node_due = false;
    std::map<int, NodeId> landmarks;
    std::map<int, std::vector<std::size_t>> edges_by_landmark;
    int detection_edges = 0;
  };

  struct PendingDetection {
    Pose raw_pose;
    Observation observation;
  };

  void start_keyframe_zero(double stamp, const Pose& raw);
  void reset_temporary(NodeId keyframe, const Pose& raw);
  NodeId temp_node_for_detection(double stamp);
  std::optional<Observation> to_observation(const AssociatedDetection& det) const;
  std::vector<GateEntry> gate_view() const;
  LandmarkEstimate main_estimate(int semantic_id) const;
  RefinedConstraint fallback_constraint(int semantic_id, const Pose& keyframe) const;

  DualGraphConfig config_;
  Graph main_;
  std::map<int, RegistryEntry> registry_;
  std::optional<TemporaryGraph> temp_;
  std::map<int, PendingDetection> pending_;  // single-graph mode

  std::vector<NodeId> keyframes_;
  Pose last_keyframe_raw_;
  Pose latest_raw_;
  double latest_stamp_ = 0.0;
  bool have_odometry_ = false;
  double last_detection_stamp_ = -1e300;
  Pose correction_;

  std::vector<KeyframeDiagnostics> diagnostics_;
  KeyframeDiagnostics interval_;  // counters since the previous keyframe
  long accepted_total_ = 0;
  RejectionCounts rejected_total_;
  double last_temp_opt_ms_ = 0.0;
};

/// Re-expresses an observation taken from a frame at `offset` relative to a
/// new reference frame. The residual of the edge is unchanged.
Observation transport(const Observation& obs, const Pose& offset);

}  // namespace dualpg
