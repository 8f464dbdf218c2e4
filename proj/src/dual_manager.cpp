#include "dualpg/dual_manager.hpp"

#include "dualpg/errors.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <set>

namespace dualpg {

namespace {

Mat6 diag6(double trans, double rot) {
  Vec6 d;
  d << trans, trans, trans, rot, rot, rot;
  return d.asDiagonal();
}

}  // namespace

Mat6 InformationDefaults::odometry() const { return diag6(odometry_trans, odometry_rot); }
Mat6 InformationDefaults::detection_pose() const { return diag6(detection_trans, detection_rot); }
Mat3 InformationDefaults::detection_point_info() const {
  return Mat3::Identity() * detection_point;
}
Mat6 InformationDefaults::prior_pose() const { return Mat6::Identity() * prior; }
Mat3 InformationDefaults::prior_point() const { return Mat3::Identity() * prior; }

void DualGraphConfig::validate() const {
  if (!(d_main > 0 && d_temp > 0)) throw ConfigError("d_main and d_temp must be positive");
  if (d_temp > d_main) throw ConfigError("d_temp must not exceed d_main");
  if (d_rot_main < 0) throw ConfigError("d_rot_main must be non-negative");
  temp_solver.validate();
  main_solver.validate();
  association.validate();
  const InformationDefaults& i = information;
  if (!(i.odometry_trans > 0 && i.odometry_rot > 0 && i.detection_trans > 0 &&
        i.detection_rot > 0 && i.detection_point > 0 && i.prior > 0)) {
    throw ConfigError("default information values must be positive");
  }
}

Observation transport(const Observation& obs, const Pose& offset) {
  if (const auto* p = std::get_if<PoseObservation>(&obs)) {
    return PoseObservation{offset * p->measurement, p->information};
  }
  const auto& o = std::get<PointObservation>(obs);
  const Mat3 R = offset.rotation().matrix();
  Mat3 info = R * o.information * R.transpose();
  info = 0.5 * (info + info.transpose());
  return PointObservation{offset * o.measurement, info};
}

DualGraphManager::DualGraphManager(const DualGraphConfig& config,
                                   std::span<const GatePrior> landmark_map)
    : config_(config) {
  config_.validate();
  if (landmark_map.empty()) throw ConfigError("localization mode requires a non-empty gate map");
  main_.set_unique_detection_pairs(true);
  for (const GatePrior& gate : landmark_map) {
    if (registry_.count(gate.semantic_id)) {
      throw ConfigError("duplicate gate id " + std::to_string(gate.semantic_id));
    }
    NodeId id;
    if (config_.landmark_kind == LandmarkKind::Pose) {
      id = main_.add_landmark_node(gate.semantic_id, gate.pose);
      main_.add_edge(PriorEdge{id, PoseObservation{gate.pose, config_.information.prior_pose()}});
    } else {
      id = main_.add_landmark_node(gate.semantic_id, gate.pose.translation());
      main_.add_edge(PriorEdge{
          id, PointObservation{gate.pose.translation(), config_.information.prior_point()}});
    }
    registry_.emplace(gate.semantic_id, RegistryEntry{id, gate.pose});
  }
}

LandmarkEstimate DualGraphManager::main_estimate(int semantic_id) const {
  return main_.landmark_node(registry_.at(semantic_id).node).estimate;
}

std::vector<GateEntry> DualGraphManager::gate_view() const {
  std::vector<GateEntry> gates;
  gates.reserve(registry_.size());
  for (const auto& [sid, entry] : registry_) {
    const LandmarkEstimate est = main_estimate(sid);
    if (const auto* p = std::get_if<Pose>(&est)) {
      gates.push_back({sid, *p});
    } else {
      gates.push_back({sid, Pose(entry.prior.rotation(), std::get<Vec3>(est))});
    }
  }
  return gates;
}

void DualGraphManager::start_keyframe_zero(double stamp, const Pose& raw) {
  const NodeId kf = main_.add_pose_node(correction_ * raw, true, stamp);
  keyframes_.push_back(kf);
  last_keyframe_raw_ = raw;
  if (!config_.single_graph_mode) reset_temporary(kf, raw);
}

void DualGraphManager::reset_temporary(NodeId keyframe, const Pose& raw) {
  temp_.emplace();
  temp_->anchor_estimate = main_.pose_node(keyframe).estimate;
  temp_->anchor_raw = raw;
  const double stamp = main_.pose_node(keyframe).stamp;
  temp_->anchor = temp_->graph.add_pose_node(temp_->anchor_estimate, true, stamp);
  temp_->last_node = temp_->anchor;
  temp_->last_raw = raw;
  temp_->last_stamp = stamp;
  temp_->node_due = translational_distance(raw, latest_raw_) >= config_.d_temp;
}

Pose DualGraphManager::process_odometry(double stamp, const Pose& raw_pose) {
  if (have_odometry_ && !(stamp > latest_stamp_)) {
    throw InputError("odometry stamps must be strictly increasing");
  }
  latest_stamp_ = stamp;
  latest_raw_ = raw_pose;
  if (!have_odometry_) {
    have_odometry_ = true;
    start_keyframe_zero(stamp, raw_pose);
    return correction_ * raw_pose;
  }
  if (temp_ && translational_distance(temp_->last_raw, raw_pose) >= config_.d_temp) {
    temp_->node_due = true;
  }
  const bool far = translational_distance(last_keyframe_raw_, raw_pose) >= config_.d_main;
  const bool turned =
      config_.d_rot_main > 0 &&
      rotational_distance(last_keyframe_raw_.rotation(), raw_pose.rotation()) >= config_.d_rot_main;
  if (far || turned) promote_keyframe();
  return correction_ * raw_pose;
}

std::optional<Observation> DualGraphManager::to_observation(const AssociatedDetection& det) const {
  const InformationDefaults& defaults = config_.information;
  const auto& info = det.detection.information;
  if (config_.landmark_kind == LandmarkKind::Pose) {
    const auto* m = std::get_if<Pose>(&det.detection.measurement);
    if (!m) return std::nullopt;
    Mat6 w = defaults.detection_pose();
    if (info && info->rows() == 6 && info->cols() == 6) w = *info;
    return PoseObservation{*m, w};
  }
  Mat3 w = defaults.detection_point_info();
  if (info && info->rows() >= 3 && info->cols() >= 3) w = info->topLeftCorner<3, 3>();
  return PointObservation{position_of(det.detection.measurement), w};
}

NodeId DualGraphManager::temp_node_for_detection(double stamp) {
  TemporaryGraph& t = *temp_;
  if (t.last_stamp == stamp || !t.node_due) return t.last_node;
  const Pose estimate = t.anchor_estimate * relative(t.anchor_raw, latest_raw_);
  const NodeId node = t.graph.add_pose_node(estimate, false, stamp);
  t.graph.add_edge(OdometryEdge{t.last_node, node, relative(t.last_raw, latest_raw_),
                                config_.information.odometry()});
  t.last_node = node;
  t.last_raw = latest_raw_;
  t.last_stamp = stamp;
  t.node_due = false;
  return node;
}

int DualGraphManager::process_detections(double stamp, std::span<const RawDetection> detections) {
  if (!have_odometry_) throw InputError("detections received before any odometry");
  if (stamp < last_detection_stamp_) throw InputError("detection stamps must not decrease");
  last_detection_stamp_ = stamp;

  const Pose drone = correction_ * latest_raw_;
  const std::vector<GateEntry> gates = gate_view();
  const AssociationResult assoc = associate(drone, detections, gates, config_.association);
  interval_.rejected += assoc.rejected;
  rejected_total_ += assoc.rejected;

  int accepted = 0;
  for (const AssociatedDetection& det : assoc.accepted) {
    std::optional<Observation> obs = to_observation(det);
    if (!obs || !is_valid_information(std::visit(
                    [](const auto& o) -> Eigen::MatrixXd { return o.information; }, *obs))) {
      ++interval_.kind_rejected;
      continue;
    }
    ++accepted;
    if (config_.single_graph_mode) {
      pending_.insert_or_assign(det.semantic_id, PendingDetection{latest_raw_, *obs});
      continue;
    }
    if (!temp_) reset_temporary(keyframes_.back(), last_keyframe_raw_);
    TemporaryGraph& t = *temp_;
    const NodeId node = temp_node_for_detection(stamp);
    // Observations not taken exactly at the node's pose are carried over by odometry.
    const Observation carried = transport(*obs, relative(t.last_raw, latest_raw_));
    auto lm = t.landmarks.find(det.semantic_id);
    if (lm == t.landmarks.end()) {
      const NodeId id = t.graph.add_landmark_node(det.semantic_id, main_estimate(det.semantic_id));
      lm = t.landmarks.emplace(det.semantic_id, id).first;
      if (config_.temp_graph_priors) {
        const Pose& prior = registry_.at(det.semantic_id).prior;
        if (config_.landmark_kind == LandmarkKind::Pose) {
          t.graph.add_edge(PriorEdge{id, PoseObservation{prior, config_.information.prior_pose()}});
        } else {
          t.graph.add_edge(PriorEdge{
              id, PointObservation{prior.translation(), config_.information.prior_point()}});
        }
      }
    }
    const std::size_t edge = t.graph.add_edge(DetectionEdge{node, lm->second, carried});
    t.edges_by_landmark[det.semantic_id].push_back(edge);
    ++t.detection_edges;
  }
  interval_.raw_detections += accepted;
  accepted_total_ += accepted;
  return accepted;
}

RefinedConstraint DualGraphManager::fallback_constraint(int semantic_id,
                                                        const Pose& keyframe) const {
  const TemporaryGraph& t = *temp_;
  double best = std::numeric_limits<double>::infinity();
  RefinedConstraint out;
  out.semantic_id = semantic_id;
  out.fallback = true;
  const auto& edge_ids = t.edges_by_landmark.at(semantic_id);
  out.support_count = static_cast<int>(edge_ids.size());
  for (std::size_t idx : edge_ids) {
    const Edge& edge = t.graph.edges()[idx];
    const double m = mahalanobis(t.graph, edge);
    if (m < best) {
      best = m;
      const auto& det = std::get<DetectionEdge>(edge);
      const Pose& from = t.graph.pose_node(det.pose).estimate;
      out.observation = transport(det.observation, relative(keyframe, from));
    }
  }
  return out;
}

std::vector<RefinedConstraint> DualGraphManager::compress_temporary() {
  std::vector<RefinedConstraint> refined;
  last_temp_opt_ms_ = 0.0;
  if (!temp_ || temp_->detection_edges == 0) {
    temp_.reset();
    return refined;
  }
  TemporaryGraph& t = *temp_;

  // Keyframe node at the latest odometry pose.
  NodeId kf = t.last_node;
  if (!(t.last_stamp == latest_stamp_)) {
    const Pose estimate = t.anchor_estimate * relative(t.anchor_raw, latest_raw_);
    kf = t.graph.add_pose_node(estimate, false, latest_stamp_);
    t.graph.add_edge(OdometryEdge{t.last_node, kf, relative(t.last_raw, latest_raw_),
                                  config_.information.odometry()});
  }
  interval_.temp_nodes = t.graph.node_count();
  interval_.temp_edges = t.graph.edge_count();

  bool solver_ok = true;
  try {
    const OptReport rep = optimize(t.graph, config_.temp_solver);
    last_temp_opt_ms_ = rep.wall_ms;
    solver_ok = rep.reason != Termination::Stalled;
  } catch (const std::exception&) {
    solver_ok = false;
  }

  const Pose kf_pose = t.graph.pose_node(kf).estimate;
  const Mat3 R_kf = kf_pose.rotation().matrix();

  // The refined edge is expressed relative to the keyframe, so the landmark
  // information is taken with the pose chain held at its optimum.
  Graph conditioned = t.graph;
  for (const auto& [id, node] : conditioned.nodes()) {
    if (std::holds_alternative<PoseNode>(node)) conditioned.set_fixed(id, true);
  }

  for (const auto& [sid, lm_id] : t.landmarks) {
    const int support = static_cast<int>(t.edges_by_landmark[sid].size());
    if (!solver_ok) {
      refined.push_back(fallback_constraint(sid, kf_pose));
      continue;
    }
    RefinedConstraint rc;
    rc.semantic_id = sid;
    rc.support_count = support;
    const LandmarkNode& lm = t.graph.landmark_node(lm_id);
    Eigen::MatrixXd info;
    try {
      if (config_.information_mode == InformationMode::Marginal) {
        info = marginal_information(conditioned, lm_id);
      } else {
        const int dim = lm.kind() == LandmarkKind::Pose ? 6 : 3;
        info = Eigen::MatrixXd::Zero(dim, dim);
        for (std::size_t idx : t.edges_by_landmark[sid]) {
          const auto& det = std::get<DetectionEdge>(t.graph.edges()[idx]);
          const Pose& from = t.graph.pose_node(det.pose).estimate;
          const Observation moved = transport(det.observation, relative(kf_pose, from));
          info += std::visit([](const auto& o) -> Eigen::MatrixXd { return o.information; }, moved);
        }
      }
    } catch (const std::exception&) {
      refined.push_back(fallback_constraint(sid, kf_pose));
      continue;
    }
    if (const auto* pose = std::get_if<Pose>(&lm.estimate)) {
      // Pose residuals live in the landmark tangent space in both frames.
      rc.observation = PoseObservation{relative(kf_pose, *pose), info};
    } else {
      Mat3 w = info;
      if (config_.information_mode == InformationMode::Marginal) {
        w = R_kf.transpose() * w * R_kf;
        w = 0.5 * (w + w.transpose());
      }
      rc.observation = PointObservation{kf_pose.inverse() * std::get<Vec3>(lm.estimate), w};
    }
    const bool valid = is_valid_information(
        std::visit([](const auto& o) -> Eigen::MatrixXd { return o.information; }, rc.observation));
    refined.push_back(valid ? rc : fallback_constraint(sid, kf_pose));
  }
  temp_.reset();
  return refined;
}

OptReport DualGraphManager::promote_keyframe() {
  if (!have_odometry_) throw InputError("cannot create a keyframe before any odometry");
  KeyframeDiagnostics diag = interval_;
  interval_ = KeyframeDiagnostics{};

  const NodeId prev = keyframes_.back();
  const Pose kf_raw = latest_raw_;
  const NodeId kf = main_.add_pose_node(correction_ * kf_raw, false, latest_stamp_);
  main_.add_edge(OdometryEdge{prev, kf, relative(last_keyframe_raw_, kf_raw),
                              config_.information.odometry()});

  std::vector<RefinedConstraint> refined;
  if (config_.single_graph_mode) {
    for (const auto& [sid, pending] : pending_) {
      refined.push_back(RefinedConstraint{
          sid, transport(pending.observation, relative(kf_raw, pending.raw_pose)), 1, false});
    }
    pending_.clear();
  } else {
    refined = compress_temporary();
  }
  for (const RefinedConstraint& rc : refined) {
    main_.add_edge(DetectionEdge{kf, registry_.at(rc.semantic_id).node, rc.observation});
    ++diag.refined;
    if (rc.fallback) ++diag.fallbacks;
  }

  OptReport report;
  try {
    report = optimize(main_, config_.main_solver);
    correction_ = main_.pose_node(kf).estimate * kf_raw.inverse();
  } catch (const std::exception&) {
    diag.solver_error = true;
  }
  keyframes_.push_back(kf);
  last_keyframe_raw_ = kf_raw;
  if (!config_.single_graph_mode) reset_temporary(kf, kf_raw);

  diag.stamp = latest_stamp_;
  diag.keyframe = static_cast<int>(keyframes_.size()) - 1;
  diag.main_nodes = main_.node_count();
  diag.main_edges = main_.edge_count();
  diag.main_detection_edges = main_.detection_edge_count();
  diag.main_landmarks = main_.landmark_count();
  diag.main_opt = report;
  diag.temp_opt_ms = last_temp_opt_ms_;
  diag.correction_norm = correction_.translation().norm();
  diagnostics_.push_back(diag);
  return report;
}

void DualGraphManager::finish() {
  if (!have_odometry_) return;
  const bool pending = config_.single_graph_mode ? !pending_.empty()
                                                 : (temp_ && temp_->detection_edges > 0);
  const bool moved = translational_distance(last_keyframe_raw_, latest_raw_) > 0.0;
  if (pending || moved) promote_keyframe();
}

}  // namespace dualpg
