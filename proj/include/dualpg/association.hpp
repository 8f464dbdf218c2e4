// Gate detection association: projection into the map frame, optimal
// assignment by Euclidean distance, and distance / heading gating with
// support for gates observed from behind.
#pragma once

#include "dualpg/geometry.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

namespace dualpg {

struct AssociationConfig {
  double max_match_distance = 1.5;  // m
  double max_yaw_error = 0.6;       // rad
  bool allow_reverse = true;

  void validate() const;
};

/// A full relative pose (camera + PnP) or a position-only observation.
using Measurement = std::variant<Pose, Vec3>;

struct RawDetection {
  Measurement measurement;  // body frame: x forward, y left, z up
  std::optional<Eigen::MatrixXd> information;
  double stamp = 0.0;
};

/// A known gate as the associator sees it (map frame).
struct GateEntry {
  int semantic_id = 0;
  Pose pose;
};

struct AssociatedDetection {
  RawDetection detection;  // flipped in place when `reversed`
  int semantic_id = 0;
  Measurement global;
  bool reversed = false;
};

struct RejectionCounts {
  int distance = 0;
  int yaw = 0;
  int duplicate = 0;

  RejectionCounts& operator+=(const RejectionCounts& o) {
    distance += o.distance;
    yaw += o.yaw;
    duplicate += o.duplicate;
    return *this;
  }
  int total() const { return distance + yaw + duplicate; }
};

struct AssociationResult {
  std::vector<AssociatedDetection> accepted;  // sorted by semantic id
  RejectionCounts rejected;
};

Measurement to_global(const Pose& drone_pose, const RawDetection& detection);
Vec3 position_of(const Measurement& m);

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  double cost = 0.0;
};

/// Minimum-cost assignment of min(rows, cols) pairs (Kuhn-Munkres with
/// potentials, O(n^2 m)).
Assignment hungarian(const Eigen::MatrixXd& cost);

/// Cost given to pairs that fail gating before assignment.
inline constexpr double kAssignmentSentinel = 1e6;

AssociationResult associate(const Pose& drone_pose, std::span<const RawDetection> detections,
                            std::span<const GateEntry> gates, const AssociationConfig& config);

/// Rotates a gate observation half a turn about its vertical axis.
Pose flip_gate(const Pose& gate);

}  // namespace dualpg
