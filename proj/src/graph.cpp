#include "dualpg/graph.hpp"

#include "dualpg/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <numeric>
#include <string>

namespace dualpg {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string describe(NodeId id) { return "node " + std::to_string(id.value); }

void fill_relative_pose_term(EdgeTerm& term, const Pose& a, const Pose& b, const Pose& z,
                             bool with_jacobians) {
  const Pose err = relative(z, relative(a, b));
  const Twist e = err.log();
  term.residual = e;
  if (!with_jacobians) return;
  const Mat6 jr_inv = se3_right_jacobian_inverse(e);
  term.jacobians[0] = -jr_inv * adjoint(relative(b, a));
  term.jacobians[1] = jr_inv;
}

void fill_point_term(EdgeTerm& term, const Pose& x, const Vec3& p, const Vec3& z,
                     bool with_jacobians) {
  const Mat3 Rt = x.rotation().matrix().transpose();
  const Vec3 q = Rt * (p - x.translation());
  term.residual = q - z;
  if (!with_jacobians) return;
  BlockMat jx(3, 6);
  jx.leftCols<3>() = -Mat3::Identity();
  jx.rightCols<3>() = skew(q);
  term.jacobians[0] = jx;
  term.jacobians[1] = Rt;
}

}  // namespace

Vec3 LandmarkNode::position() const {
  return std::visit(overloaded{[](const Pose& p) -> Vec3 { return p.translation(); },
                               [](const Vec3& p) -> Vec3 { return p; }},
                    estimate);
}

NodeId id_of(const Node& node) {
  return std::visit([](const auto& n) { return n.id; }, node);
}

bool is_fixed(const Node& node) {
  return std::visit([](const auto& n) { return n.fixed; }, node);
}

int tangent_dim(const Node& node) {
  if (const auto* lm = std::get_if<LandmarkNode>(&node)) {
    return lm->kind() == LandmarkKind::Point ? 3 : 6;
  }
  return 6;
}

bool is_valid_information(const Eigen::MatrixXd& information) {
  if (information.rows() != information.cols() || information.rows() == 0) return false;
  if (!information.allFinite()) return false;
  const double scale = std::max(1.0, information.cwiseAbs().maxCoeff());
  if ((information - information.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(information);
  return llt.info() == Eigen::Success;
}

NodeId Graph::add_pose_node(const Pose& estimate, bool fixed, double stamp) {
  NodeId id{next_id_++};
  nodes_.emplace(id, PoseNode{id, estimate, fixed, stamp});
  return id;
}

NodeId Graph::add_landmark_node(int semantic_id, const LandmarkEstimate& estimate, bool fixed) {
  if (landmarks_.count(semantic_id)) {
    throw StructuralError("duplicate landmark semantic id " + std::to_string(semantic_id));
  }
  NodeId id{next_id_++};
  nodes_.emplace(id, LandmarkNode{id, estimate, semantic_id, fixed});
  landmarks_.emplace(semantic_id, id);
  return id;
}

void Graph::insert_node(const Node& node) {
  const NodeId id = id_of(node);
  if (nodes_.count(id)) throw StructuralError("duplicate " + describe(id));
  if (const auto* lm = std::get_if<LandmarkNode>(&node)) {
    if (landmarks_.count(lm->semantic_id)) {
      throw StructuralError("duplicate landmark semantic id " + std::to_string(lm->semantic_id));
    }
    landmarks_.emplace(lm->semantic_id, id);
  }
  nodes_.emplace(id, node);
  next_id_ = std::max(next_id_, id.value + 1);
}

std::size_t Graph::add_edge(const Edge& edge) {
  auto require_pose = [&](NodeId id) {
    if (!std::holds_alternative<PoseNode>(node(id))) {
      throw StructuralError(describe(id) + " is not a pose node");
    }
  };
  auto require_info = [](const Eigen::MatrixXd& info) {
    if (!is_valid_information(info)) {
      throw StructuralError("information matrix is not symmetric positive-definite");
    }
  };
  auto observation_matches = [](const Observation& obs, const Node& n) {
    const bool pose_obs = std::holds_alternative<PoseObservation>(obs);
    if (std::holds_alternative<PoseNode>(n)) return pose_obs;
    return pose_obs == (std::get<LandmarkNode>(n).kind() == LandmarkKind::Pose);
  };
  auto info_of = [](const Observation& obs) -> Eigen::MatrixXd {
    return std::visit([](const auto& o) -> Eigen::MatrixXd { return o.information; }, obs);
  };

  std::visit(overloaded{
                 [&](const OdometryEdge& e) {
                   require_pose(e.from);
                   require_pose(e.to);
                   require_info(e.information);
                 },
                 [&](const DetectionEdge& e) {
                   require_pose(e.pose);
                   const Node& lm = node(e.landmark);
                   if (!std::holds_alternative<LandmarkNode>(lm)) {
                     throw StructuralError(describe(e.landmark) + " is not a landmark node");
                   }
                   if (!observation_matches(e.observation, lm)) {
                     throw StructuralError("detection measurement kind does not match landmark kind");
                   }
                   require_info(info_of(e.observation));
                   if (unique_pairs_ &&
                       !detection_pairs_.emplace(e.pose.value, e.landmark.value).second) {
                     throw StructuralError("duplicate detection edge between " + describe(e.pose) +
                                           " and " + describe(e.landmark));
                   }
                 },
                 [&](const PriorEdge& e) {
                   if (!observation_matches(e.observation, node(e.node))) {
                     throw StructuralError("prior measurement kind does not match node kind");
                   }
                   require_info(info_of(e.observation));
                 },
             },
             edge);
  edges_.push_back(edge);
  return edges_.size() - 1;
}

const Node& Graph::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw StructuralError(describe(id) + " does not exist");
  return it->second;
}

Node& Graph::mutable_node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw StructuralError(describe(id) + " does not exist");
  return it->second;
}

const PoseNode& Graph::pose_node(NodeId id) const {
  const auto* p = std::get_if<PoseNode>(&node(id));
  if (!p) throw StructuralError(describe(id) + " is not a pose node");
  return *p;
}

PoseNode& Graph::pose_node(NodeId id) {
  auto* p = std::get_if<PoseNode>(&mutable_node(id));
  if (!p) throw StructuralError(describe(id) + " is not a pose node");
  return *p;
}

const LandmarkNode& Graph::landmark_node(NodeId id) const {
  const auto* l = std::get_if<LandmarkNode>(&node(id));
  if (!l) throw StructuralError(describe(id) + " is not a landmark node");
  return *l;
}

LandmarkNode& Graph::landmark_node(NodeId id) {
  auto* l = std::get_if<LandmarkNode>(&mutable_node(id));
  if (!l) throw StructuralError(describe(id) + " is not a landmark node");
  return *l;
}

std::optional<NodeId> Graph::find_landmark(int semantic_id) const {
  auto it = landmarks_.find(semantic_id);
  if (it == landmarks_.end()) return std::nullopt;
  return it->second;
}

void Graph::set_fixed(NodeId id, bool fixed) {
  std::visit([fixed](auto& n) { n.fixed = fixed; }, mutable_node(id));
}

void Graph::apply_increment(NodeId id, const Eigen::Ref<const Eigen::VectorXd>& delta) {
  std::visit(overloaded{
                 [&](PoseNode& n) { n.estimate = n.estimate * Pose::exp(delta.head<6>()); },
                 [&](LandmarkNode& n) {
                   if (auto* p = std::get_if<Pose>(&n.estimate)) {
                     *p = *p * Pose::exp(delta.head<6>());
                   } else {
                     std::get<Vec3>(n.estimate) += delta.head<3>();
                   }
                 },
             },
             mutable_node(id));
}

std::size_t Graph::pose_count() const { return nodes_.size() - landmarks_.size(); }

std::size_t Graph::detection_edge_count() const {
  return static_cast<std::size_t>(std::count_if(edges_.begin(), edges_.end(), [](const Edge& e) {
    return std::holds_alternative<DetectionEdge>(e);
  }));
}

EdgeTerm evaluate_edge(const Graph& graph, const Edge& edge, bool with_jacobians) {
  EdgeTerm term;
  std::visit(
      overloaded{
          [&](const OdometryEdge& e) {
            term.node_count = 2;
            term.nodes = {e.from, e.to};
            term.information = e.information;
            fill_relative_pose_term(term, graph.pose_node(e.from).estimate,
                                    graph.pose_node(e.to).estimate, e.measurement, with_jacobians);
          },
          [&](const DetectionEdge& e) {
            term.node_count = 2;
            term.nodes = {e.pose, e.landmark};
            const Pose& x = graph.pose_node(e.pose).estimate;
            const LandmarkNode& lm = graph.landmark_node(e.landmark);
            if (const auto* obs = std::get_if<PoseObservation>(&e.observation)) {
              const auto* l = std::get_if<Pose>(&lm.estimate);
              if (!l) throw StructuralError("pose detection against a point landmark");
              term.information = obs->information;
              fill_relative_pose_term(term, x, *l, obs->measurement, with_jacobians);
            } else {
              const auto& pobs = std::get<PointObservation>(e.observation);
              term.information = pobs.information;
              fill_point_term(term, x, lm.position(), pobs.measurement, with_jacobians);
            }
          },
          [&](const PriorEdge& e) {
            term.node_count = 1;
            term.nodes = {e.node, e.node};
            const Node& n = graph.node(e.node);
            if (const auto* obs = std::get_if<PoseObservation>(&e.observation)) {
              const Pose* x = nullptr;
              if (const auto* pn = std::get_if<PoseNode>(&n)) {
                x = &pn->estimate;
              } else {
                x = std::get_if<Pose>(&std::get<LandmarkNode>(n).estimate);
              }
              if (!x) throw StructuralError("pose prior on a point landmark");
              term.information = obs->information;
              const Twist r = relative(obs->measurement, *x).log();
              term.residual = r;
              if (with_jacobians) term.jacobians[0] = se3_right_jacobian_inverse(r);
            } else {
              const auto* lm = std::get_if<LandmarkNode>(&n);
              if (!lm || lm->kind() != LandmarkKind::Point) {
                throw StructuralError("point prior on a non-point node");
              }
              const auto& pobs = std::get<PointObservation>(e.observation);
              term.information = pobs.information;
              term.residual = lm->position() - pobs.measurement;
              if (with_jacobians) term.jacobians[0] = Mat3::Identity();
            }
          },
      },
      edge);
  return term;
}

Eigen::VectorXd edge_error(const Graph& graph, const Edge& edge) {
  return evaluate_edge(graph, edge, false).residual;
}

double mahalanobis(const Graph& graph, const Edge& edge) {
  const EdgeTerm t = evaluate_edge(graph, edge, false);
  return t.residual.dot(t.information * t.residual);
}

double chi2(const Graph& graph) {
  double total = 0.0;
  for (const Edge& e : graph.edges()) total += mahalanobis(graph, e);
  return total;
}

VariableOrdering make_ordering(const Graph& graph) {
  VariableOrdering ord;
  for (const auto& [id, node] : graph.nodes()) {
    if (is_fixed(node)) continue;
    const int dim = tangent_dim(node);
    ord.index.emplace(id.value, static_cast<int>(ord.free_nodes.size()));
    ord.free_nodes.push_back(id);
    ord.offsets.push_back(ord.dimension);
    ord.dims.push_back(dim);
    ord.dimension += dim;
  }
  return ord;
}

void check_gauge(const Graph& graph) {
  std::unordered_map<std::uint64_t, std::size_t> index;
  std::vector<std::size_t> parent;
  std::vector<char> anchored;
  for (const auto& [id, node] : graph.nodes()) {
    index.emplace(id.value, parent.size());
    parent.push_back(parent.size());
    anchored.push_back(is_fixed(node) ? 1 : 0);
  }
  auto find = [&](std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  auto unite = [&](NodeId a, NodeId b) {
    const std::size_t ra = find(index.at(a.value));
    const std::size_t rb = find(index.at(b.value));
    if (ra == rb) return;
    parent[ra] = rb;
    anchored[rb] = anchored[rb] || anchored[ra];
  };
  for (const Edge& edge : graph.edges()) {
    std::visit(overloaded{
                   [&](const OdometryEdge& e) { unite(e.from, e.to); },
                   [&](const DetectionEdge& e) { unite(e.pose, e.landmark); },
                   [&](const PriorEdge& e) { anchored[find(index.at(e.node.value))] = 1; },
               },
               edge);
  }
  for (const auto& [id, node] : graph.nodes()) {
    if (is_fixed(node)) continue;
    if (!anchored[find(index.at(id.value))]) {
      throw GaugeError("gauge deficiency: " + describe(id) +
                       " is not connected to a fixed node or prior");
    }
  }
}

LinearSystem linearize(const Graph& graph) {
  check_gauge(graph);
  LinearSystem sys;
  sys.ordering = make_ordering(graph);
  const VariableOrdering& ord = sys.ordering;
  sys.b = Eigen::VectorXd::Zero(ord.dimension);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(graph.edge_count() * 72);
  auto push_block = [&](int row, int col, const BlockMat& block) {
    for (int c = 0; c < block.cols(); ++c) {
      for (int r = 0; r < block.rows(); ++r) {
        triplets.emplace_back(row + r, col + c, block(r, c));
      }
    }
  };

  for (const Edge& edge : graph.edges()) {
    const EdgeTerm term = evaluate_edge(graph, edge, true);
    const BlockVec we = term.information * term.residual;
    sys.chi2 += term.residual.dot(we);
    std::array<int, 2> slot{-1, -1};
    std::array<BlockMat, 2> jtw;
    for (int k = 0; k < term.node_count; ++k) {
      if (auto idx = ord.index_of(term.nodes[k])) {
        slot[k] = *idx;
        jtw[k] = term.jacobians[k].transpose() * term.information;
        sys.b.segment(ord.offsets[*idx], ord.dims[*idx]) += jtw[k] * term.residual;
      }
    }
    for (int i = 0; i < term.node_count; ++i) {
      if (slot[i] < 0) continue;
      for (int j = 0; j < term.node_count; ++j) {
        if (slot[j] < 0) continue;
        push_block(ord.offsets[slot[i]], ord.offsets[slot[j]], jtw[i] * term.jacobians[j]);
      }
    }
  }
  sys.H.resize(ord.dimension, ord.dimension);
  sys.H.setFromTriplets(triplets.begin(), triplets.end());
  return sys;
}

}  // namespace dualpg
