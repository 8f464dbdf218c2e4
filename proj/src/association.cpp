#include "dualpg/association.hpp"

#include "dualpg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dualpg {

void AssociationConfig::validate() const {
  if (!(max_match_distance > 0 && max_yaw_error > 0)) {
    throw ConfigError("association thresholds must be positive");
  }
}

Measurement to_global(const Pose& drone_pose, const RawDetection& detection) {
  if (const auto* p = std::get_if<Pose>(&detection.measurement)) return drone_pose * *p;
  return transform_point(drone_pose, std::get<Vec3>(detection.measurement));
}

Vec3 position_of(const Measurement& m) {
  if (const auto* p = std::get_if<Pose>(&m)) return p->translation();
  return std::get<Vec3>(m);
}

Pose flip_gate(const Pose& gate) { return gate * Pose(Rotation::about_z(std::numbers::pi), Vec3::Zero()); }

Assignment hungarian(const Eigen::MatrixXd& cost) {
  Assignment out;
  if (cost.rows() == 0 || cost.cols() == 0) return out;
  const bool transposed = cost.rows() > cost.cols();
  const Eigen::MatrixXd a = transposed ? Eigen::MatrixXd(cost.transpose()) : cost;
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  constexpr double inf = std::numeric_limits<double>::infinity();

  // 1-based potentials; p[j] is the row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    const int r = p[j] - 1;
    const int c = j - 1;
    out.pairs.emplace_back(transposed ? c : r, transposed ? r : c);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (const auto& [r, c] : out.pairs) out.cost += cost(r, c);
  return out;
}

AssociationResult associate(const Pose& drone_pose, std::span<const RawDetection> detections,
                            std::span<const GateEntry> gates, const AssociationConfig& config) {
  AssociationResult result;
  if (detections.empty()) return result;
  if (gates.empty()) {
    result.rejected.distance = static_cast<int>(detections.size());
    return result;
  }

  enum class Fit : char { Far, BadYaw, Ok, Reversed };
  const auto rows = static_cast<Eigen::Index>(detections.size());
  const auto cols = static_cast<Eigen::Index>(gates.size());
  std::vector<Measurement> global;
  global.reserve(detections.size());
  for (const auto& d : detections) global.push_back(to_global(drone_pose, d));

  Eigen::MatrixXd cost(rows, cols);
  std::vector<Fit> fit(static_cast<std::size_t>(rows * cols), Fit::Far);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Pose& gate = gates[static_cast<std::size_t>(c)].pose;
      const double dist = (position_of(global[r]) - gate.translation()).norm();
      Fit f = Fit::Far;
      if (dist <= config.max_match_distance) {
        f = Fit::Ok;
        if (const auto* g = std::get_if<Pose>(&global[r])) {
          const double err = wrap_angle(yaw_of(g->rotation()) - yaw_of(gate.rotation()));
          if (std::abs(err) > config.max_yaw_error) {
            const bool flips = config.allow_reverse &&
                               std::abs(wrap_angle(err - std::numbers::pi)) <= config.max_yaw_error;
            f = flips ? Fit::Reversed : Fit::BadYaw;
          }
        }
      }
      fit[static_cast<std::size_t>(r * cols + c)] = f;
      cost(r, c) = (f == Fit::Ok || f == Fit::Reversed) ? dist : kAssignmentSentinel;
    }
  }

  const Assignment assignment = hungarian(cost);
  std::vector<char> matched(detections.size(), 0);
  for (const auto& [r, c] : assignment.pairs) {
    const Fit f = fit[static_cast<std::size_t>(r * cols + c)];
    if (f != Fit::Ok && f != Fit::Reversed) continue;
    matched[static_cast<std::size_t>(r)] = 1;
    AssociatedDetection a;
    a.detection = detections[static_cast<std::size_t>(r)];
    a.semantic_id = gates[static_cast<std::size_t>(c)].semantic_id;
    a.reversed = f == Fit::Reversed;
    if (a.reversed) {
      a.detection.measurement = flip_gate(std::get<Pose>(a.detection.measurement));
    }
    a.global = to_global(drone_pose, a.detection);
    result.accepted.push_back(std::move(a));
  }

  for (Eigen::Index r = 0; r < rows; ++r) {
    if (matched[static_cast<std::size_t>(r)]) continue;
    bool near = false;
    bool feasible = false;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Fit f = fit[static_cast<std::size_t>(r * cols + c)];
      near = near || f != Fit::Far;
      feasible = feasible || f == Fit::Ok || f == Fit::Reversed;
    }
    if (feasible) {
      ++result.rejected.duplicate;
    } else if (near) {
      ++result.rejected.yaw;
    } else {
      ++result.rejected.distance;
    }
  }
  std::sort(result.accepted.begin(), result.accepted.end(),
            [](const auto& x, const auto& y) { return x.semantic_id < y.semantic_id; });
  return result;
}

}  // namespace dualpg
