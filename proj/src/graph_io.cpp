#include "dualpg/graph_io.hpp"

#include "dualpg/errors.hpp"
#include "dualpg/text.hpp"

#include <vector>

namespace dualpg {

namespace {

void put(std::string& out, double v) {
  out.push_back(' ');
  append_double(out, v);
}

void put_pose(std::string& out, const Pose& p) {
  for (int i = 0; i < 3; ++i) put(out, p.translation()[i]);
  const Eigen::Vector4d q = p.rotation().xyzw();
  for (int i = 0; i < 4; ++i) put(out, q[i]);
}

void put_upper(std::string& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = r; c < m.cols(); ++c) put(out, m(r, c));
  }
}

void put_observation(std::string& out, const Observation& obs) {
  if (const auto* p = std::get_if<PoseObservation>(&obs)) {
    put_pose(out, p->measurement);
    put_upper(out, p->information);
  } else {
    const auto& o = std::get<PointObservation>(obs);
    for (int i = 0; i < 3; ++i) put(out, o.measurement[i]);
    put_upper(out, o.information);
  }
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

class LineReader {
 public:
  LineReader(std::vector<std::string_view> tokens, std::size_t line)
      : tokens_(std::move(tokens)), line_(line) {}

  double real() {
    double v = 0.0;
    if (pos_ >= tokens_.size() || !parse_double(tokens_[pos_], v)) fail("expected a number");
    ++pos_;
    return v;
  }
  std::uint64_t id() {
    std::uint64_t v = 0;
    if (pos_ >= tokens_.size() || !parse_int(tokens_[pos_], v)) fail("expected a node id");
    ++pos_;
    return v;
  }
  int integer() {
    int v = 0;
    if (pos_ >= tokens_.size() || !parse_int(tokens_[pos_], v)) fail("expected an integer");
    ++pos_;
    return v;
  }
  Pose pose() {
    Vec3 t;
    for (int i = 0; i < 3; ++i) t[i] = real();
    double q[4];
    for (double& c : q) c = real();
    return {Rotation::from_xyzw(q[0], q[1], q[2], q[3]), t};
  }
  Vec3 vec3() {
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = real();
    return v;
  }
  template <int N>
  Eigen::Matrix<double, N, N> upper() {
    Eigen::Matrix<double, N, N> m;
    for (int r = 0; r < N; ++r) {
      for (int c = r; c < N; ++c) {
        m(r, c) = real();
        m(c, r) = m(r, c);
      }
    }
    return m;
  }
  bool fixed_flag() {
    if (pos_ < tokens_.size() && tokens_[pos_] == "FIXED") {
      ++pos_;
      return true;
    }
    return false;
  }
  void finish() {
    if (pos_ != tokens_.size()) fail("unexpected trailing tokens");
  }
  [[noreturn]] void fail(const std::string& what) const { throw InputError(what, line_); }

 private:
  std::vector<std::string_view> tokens_;
  std::size_t pos_ = 1;
  std::size_t line_;
};

}  // namespace

std::string dump_graph(const Graph& graph) {
  std::string out;
  for (const auto& [id, node] : graph.nodes()) {
    if (const auto* p = std::get_if<PoseNode>(&node)) {
      out += "POSE " + std::to_string(id.value);
      put(out, p->stamp);
      put_pose(out, p->estimate);
      if (p->fixed) out += " FIXED";
    } else {
      const auto& lm = std::get<LandmarkNode>(node);
      if (const auto* pose = std::get_if<Pose>(&lm.estimate)) {
        out += "LANDMARK_SE3 " + std::to_string(id.value) + " " + std::to_string(lm.semantic_id);
        put_pose(out, *pose);
      } else {
        out += "LANDMARK_XYZ " + std::to_string(id.value) + " " + std::to_string(lm.semantic_id);
        const Vec3& p = std::get<Vec3>(lm.estimate);
        for (int i = 0; i < 3; ++i) put(out, p[i]);
      }
      if (lm.fixed) out += " FIXED";
    }
    out.push_back('\n');
  }
  for (const Edge& edge : graph.edges()) {
    if (const auto* e = std::get_if<OdometryEdge>(&edge)) {
      out += "EDGE_ODOM " + std::to_string(e->from.value) + " " + std::to_string(e->to.value);
      put_pose(out, e->measurement);
      put_upper(out, e->information);
    } else if (const auto* d = std::get_if<DetectionEdge>(&edge)) {
      const bool se3 = std::holds_alternative<PoseObservation>(d->observation);
      out += (se3 ? "EDGE_DET_SE3 " : "EDGE_DET_XYZ ") + std::to_string(d->pose.value) + " " +
             std::to_string(d->landmark.value);
      put_observation(out, d->observation);
    } else {
      const auto& p = std::get<PriorEdge>(edge);
      const bool se3 = std::holds_alternative<PoseObservation>(p.observation);
      out += (se3 ? "EDGE_PRIOR_SE3 " : "EDGE_PRIOR_XYZ ") + std::to_string(p.node.value);
      put_observation(out, p.observation);
    }
    out.push_back('\n');
  }
  return out;
}

Graph parse_graph(std::string_view text) {
  Graph graph;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    auto tokens = split(line);
    if (tokens.empty() || tokens.front().front() == '#') continue;
    const std::string tag(tokens.front());
    LineReader in(std::move(tokens), line_no);
    try {
      if (tag == "POSE") {
        PoseNode n;
        n.id = NodeId{in.id()};
        n.stamp = in.real();
        n.estimate = in.pose();
        n.fixed = in.fixed_flag();
        in.finish();
        graph.insert_node(n);
      } else if (tag == "LANDMARK_SE3" || tag == "LANDMARK_XYZ") {
        LandmarkNode n;
        n.id = NodeId{in.id()};
        n.semantic_id = in.integer();
        if (tag == "LANDMARK_SE3") {
          n.estimate = in.pose();
        } else {
          n.estimate = in.vec3();
        }
        n.fixed = in.fixed_flag();
        in.finish();
        graph.insert_node(n);
      } else if (tag == "EDGE_ODOM") {
        OdometryEdge e;
        e.from = NodeId{in.id()};
        e.to = NodeId{in.id()};
        e.measurement = in.pose();
        e.information = in.upper<6>();
        in.finish();
        graph.add_edge(e);
      } else if (tag == "EDGE_DET_SE3" || tag == "EDGE_DET_XYZ") {
        DetectionEdge e;
        e.pose = NodeId{in.id()};
        e.landmark = NodeId{in.id()};
        if (tag == "EDGE_DET_SE3") {
          PoseObservation obs;
          obs.measurement = in.pose();
          obs.information = in.upper<6>();
          e.observation = obs;
        } else {
          PointObservation obs;
          obs.measurement = in.vec3();
          obs.information = in.upper<3>();
          e.observation = obs;
        }
        in.finish();
        graph.add_edge(e);
      } else if (tag == "EDGE_PRIOR_SE3" || tag == "EDGE_PRIOR_XYZ") {
        PriorEdge e;
        e.node = NodeId{in.id()};
        if (tag == "EDGE_PRIOR_SE3") {
          PoseObservation obs;
          obs.measurement = in.pose();
          obs.information = in.upper<6>();
          e.observation = obs;
        } else {
          PointObservation obs;
          obs.measurement = in.vec3();
          obs.information = in.upper<3>();
          e.observation = obs;
        }
        in.finish();
        graph.add_edge(e);
      } else {
        in.fail("unknown record '" + tag + "'");
      }
    } catch (const StructuralError& err) {
      throw InputError(err.what(), line_no);
    }
  }
  return graph;
}

}  // namespace dualpg
