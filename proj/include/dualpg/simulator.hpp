// Seeded drone-racing scenarios: gate maps on closed curves, constant-speed
// ground truth, drifting dead-reckoned odometry and noisy gate detections.
#pragma once

#include "dualpg/association.hpp"
#include "dualpg/dual_manager.hpp"
#include "dualpg/geometry.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dualpg {

enum class TrackShape { Ellipse, Lemniscate };

std::string to_string(TrackShape shape);
TrackShape track_shape_from_string(const std::string& name);

struct TrackSpec {
  TrackShape shape = TrackShape::Ellipse;
  double a = 25.0;  // m (semi-axis, or lemniscate half-width)
  double b = 15.0;  // m (ellipse only)
  int gate_count = 7;
  int lap_count = 2;
  double speed = 8.0;         // m/s
  double sample_rate = 30.0;  // Hz
  double gate_height = 2.0;   // m

  void validate() const;
};

struct NoiseModel {
  double odom_trans_sigma = 0.02;   // m / sqrt(m)
  double odom_rot_sigma = 0.0005;   // rad / sqrt(m)
  double odom_bias_drift = 0.1;     // m/s, constant horizontal velocity bias
  double det_pos_sigma = 0.08;      // m
  double det_rot_sigma = 0.05;      // rad
  double det_range = 8.0;           // m
  double det_fov = 1.4;             // rad, full horizontal angle
  double det_dropout = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
};

struct StampedPose {
  double t = 0.0;
  Pose pose;
};

using Trajectory = std::vector<StampedPose>;

struct DetectionBatch {
  double t = 0.0;
  std::vector<RawDetection> detections;
};

struct SimRun {
  Trajectory ground_truth;
  std::vector<GatePrior> gates;
  Trajectory odometry;
  std::vector<DetectionBatch> detections;
  std::vector<double> lap_stamps;  // lap boundaries, lap_count + 1 entries
  /// Gate id behind each emitted detection (parallel to `detections`).
  std::vector<std::vector<int>> detection_truth;
};

struct Track {
  std::vector<GatePrior> gates;
  Trajectory trajectory;
  std::vector<double> lap_stamps;
  double lap_length = 0.0;
};

/// Point on the closed curve for parameter u in [0, 2pi).
Vec3 track_point(const TrackSpec& spec, double u);

Track generate_track(const TrackSpec& spec);

Trajectory simulate_odometry(const Trajectory& ground_truth, const NoiseModel& noise,
                             std::uint64_t seed);

struct DetectionStream {
  std::vector<DetectionBatch> batches;
  std::vector<std::vector<int>> truth;
  long opportunities = 0;  // in range and field of view, before dropout
};

DetectionStream simulate_detections(const Trajectory& ground_truth,
                                    const std::vector<GatePrior>& gates, const NoiseModel& noise,
                                    std::uint64_t seed);

/// Generates the full scenario for `noise.seed`.
SimRun simulate(const TrackSpec& spec, const NoiseModel& noise);

}  // namespace dualpg
