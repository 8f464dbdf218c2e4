// Factor graph of drone poses and gate landmarks with odometry, detection and
// prior edges. The objective is the usual sum of squared Mahalanobis residuals.
#pragma once

#include "dualpg/geometry.hpp"

#include <Eigen/SparseCore>

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <variant>
#include <vector>

namespace dualpg {

struct NodeId {
  std::uint64_t value = 0;
  auto operator<=>(const NodeId&) const = default;
};

struct PoseNode {
  NodeId id;
  Pose estimate;
  bool fixed = false;
  double stamp = 0.0;
};

enum class LandmarkKind { Pose, Point };

using LandmarkEstimate = std::variant<Pose, Vec3>;

struct LandmarkNode {
  NodeId id;
  LandmarkEstimate estimate;
  int semantic_id = 0;
  bool fixed = false;

  LandmarkKind kind() const {
    return std::holds_alternative<Pose>(estimate) ? LandmarkKind::Pose : LandmarkKind::Point;
  }
  /// Position of the landmark regardless of kind.
  Vec3 position() const;
};

using Node = std::variant<PoseNode, LandmarkNode>;

NodeId id_of(const Node& node);
bool is_fixed(const Node& node);
/// Tangent dimension: 6 for poses and pose landmarks, 3 for points.
int tangent_dim(const Node& node);

struct PoseObservation {
  Pose measurement;
  Mat6 information = Mat6::Identity();
};

struct PointObservation {
  Vec3 measurement = Vec3::Zero();
  Mat3 information = Mat3::Identity();
};

using Observation = std::variant<PoseObservation, PointObservation>;

struct OdometryEdge {
  NodeId from;
  NodeId to;
  Pose measurement;
  Mat6 information = Mat6::Identity();
};

/// Measurement is expressed in the observing pose's body frame.
struct DetectionEdge {
  NodeId pose;
  NodeId landmark;
  Observation observation;
};

struct PriorEdge {
  NodeId node;
  Observation observation;
};

using Edge = std::variant<OdometryEdge, DetectionEdge, PriorEdge>;

/// Checks symmetry (1e-12 relative) and positive definiteness by Cholesky.
bool is_valid_information(const Eigen::MatrixXd& information);

class Graph {
 public:
  Graph() = default;

  /// When set, a second detection edge between the same pose and landmark is
  /// rejected. The main graph enables this; the temporary graph does not.
  void set_unique_detection_pairs(bool unique) { unique_pairs_ = unique; }

  NodeId add_pose_node(const Pose& estimate, bool fixed = false, double stamp = 0.0);
  NodeId add_landmark_node(int semantic_id, const LandmarkEstimate& estimate, bool fixed = false);
  /// Inserts a node with its own id (used by the text loader).
  void insert_node(const Node& node);

  /// Validates endpoints, kinds and information matrices; returns the edge index.
  std::size_t add_edge(const Edge& edge);

  bool contains(NodeId id) const { return nodes_.count(id) != 0; }
  const Node& node(NodeId id) const;
  const PoseNode& pose_node(NodeId id) const;
  PoseNode& pose_node(NodeId id);
  const LandmarkNode& landmark_node(NodeId id) const;
  LandmarkNode& landmark_node(NodeId id);
  std::optional<NodeId> find_landmark(int semantic_id) const;

  void set_fixed(NodeId id, bool fixed);
  /// Right-perturbation update for poses, additive for points.
  void apply_increment(NodeId id, const Eigen::Ref<const Eigen::VectorXd>& delta);

  const std::map<NodeId, Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t pose_count() const;
  std::size_t landmark_count() const { return landmarks_.size(); }
  std::size_t detection_edge_count() const;
  std::uint64_t next_id() const { return next_id_; }

 private:
  Node& mutable_node(NodeId id);

  std::map<NodeId, Node> nodes_;
  std::vector<Edge> edges_;
  std::map<int, NodeId> landmarks_;
  std::set<std::pair<std::uint64_t, std::uint64_t>> detection_pairs_;
  std::uint64_t next_id_ = 0;
  bool unique_pairs_ = false;
};

// Small fixed-capacity blocks keep per-edge evaluation off the heap.
using BlockVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 6, 1>;
using BlockMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 6, 6>;

/// Residual, information and Jacobian blocks of one edge at the current estimates.
struct EdgeTerm {
  BlockVec residual;
  BlockMat information;
  int node_count = 0;
  std::array<NodeId, 2> nodes{};
  std::array<BlockMat, 2> jacobians;
};

EdgeTerm evaluate_edge(const Graph& graph, const Edge& edge, bool with_jacobians);

Eigen::VectorXd edge_error(const Graph& graph, const Edge& edge);
double mahalanobis(const Graph& graph, const Edge& edge);
double chi2(const Graph& graph);

/// Free nodes in id order with their offsets into the stacked tangent vector.
struct VariableOrdering {
  std::vector<NodeId> free_nodes;
  std::vector<int> offsets;
  std::vector<int> dims;
  std::unordered_map<std::uint64_t, int> index;
  int dimension = 0;

  std::optional<int> index_of(NodeId id) const {
    auto it = index.find(id.value);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }
};

VariableOrdering make_ordering(const Graph& graph);

/// Throws GaugeError when a free node has no path to a fixed node or prior edge.
void check_gauge(const Graph& graph);

struct LinearSystem {
  VariableOrdering ordering;
  Eigen::SparseMatrix<double> H;  // full symmetric storage
  Eigen::VectorXd b;
  double chi2 = 0.0;
};

/// Gauss-Newton normal equations H = sum J^T W J, b = sum J^T W e.
LinearSystem linearize(const Graph& graph);

}  // namespace dualpg
