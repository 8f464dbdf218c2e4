#include "dualpg/errors.hpp"
#include "dualpg/graph.hpp"
#include "dualpg/graph_io.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <set>

using namespace dualpg;

namespace {

// Three keyframes in a chain, a pose gate seen from kf0/kf1 and a point gate
// seen from kf1/kf2, both gates with priors.
struct Fig2Graph {
  Graph g;
  NodeId x0, x1, x2, l0, l1;

  Fig2Graph() {
    x0 = g.add_pose_node(Pose(), true, 0.0);
    x1 = g.add_pose_node(Pose(Vec3(2, 0, 0)), false, 1.0);
    x2 = g.add_pose_node(Pose(Vec3(4, 0, 0)), false, 2.0);
    l0 = g.add_landmark_node(1, Pose(Rotation::about_z(0.3), Vec3(3, 1, 0)));
    l1 = g.add_landmark_node(2, Vec3(5, -1, 0));
    g.add_edge(OdometryEdge{x0, x1, Pose(Vec3(2, 0, 0)), Mat6::Identity()});
    g.add_edge(OdometryEdge{x1, x2, Pose(Vec3(2, 0, 0)), Mat6::Identity()});
    g.add_edge(DetectionEdge{x0, l0, PoseObservation{relative(Pose(), Pose(Rotation::about_z(0.3), Vec3(3, 1, 0))), Mat6::Identity()}});
    g.add_edge(DetectionEdge{x1, l0, PoseObservation{relative(Pose(Vec3(2, 0, 0)), Pose(Rotation::about_z(0.3), Vec3(3, 1, 0))), Mat6::Identity()}});
    g.add_edge(DetectionEdge{x1, l1, PointObservation{Vec3(3, -1, 0), Mat3::Identity()}});
    g.add_edge(DetectionEdge{x2, l1, PointObservation{Vec3(1, -1, 0), Mat3::Identity()}});
  }
};

}  // namespace

TEST_CASE("node creation") {
  Graph g;
  g.add_pose_node(Pose());
  CHECK(g.node_count() == 1);
  CHECK(g.edge_count() == 0);

  g.add_landmark_node(4, Vec3(1, 2, 3));
  CHECK_THROWS_AS(g.add_landmark_node(4, Pose()), StructuralError);

  Fig2Graph f;
  CHECK(f.g.node_count() == 5);
  CHECK(f.g.pose_count() == 3);
  CHECK(f.g.landmark_count() == 2);
  CHECK(f.g.find_landmark(2) == f.l1);
}

TEST_CASE("node ids are never reused") {
  Graph g;
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 20; ++i) {
    const NodeId id = i % 2 ? g.add_pose_node(Pose()) : g.add_landmark_node(i, Vec3::Zero());
    CHECK(seen.insert(id.value).second);
  }
}

TEST_CASE("edge validation") {
  Graph g;
  const NodeId x = g.add_pose_node(Pose(), true);
  const NodeId p = g.add_landmark_node(1, Vec3(1, 0, 0));
  const NodeId l = g.add_landmark_node(2, Pose());
  CHECK_THROWS_AS(g.add_edge(OdometryEdge{x, p, Pose(), Mat6::Identity()}), StructuralError);
  CHECK_THROWS_AS(g.add_edge(DetectionEdge{x, p, PoseObservation{}}), StructuralError);
  CHECK_THROWS_AS(g.add_edge(DetectionEdge{x, l, PointObservation{}}), StructuralError);
  CHECK_THROWS_AS(g.add_edge(DetectionEdge{x, NodeId{99}, PointObservation{}}), StructuralError);
  Mat3 bad = Mat3::Identity();
  bad(0, 1) = 0.5;
  CHECK_THROWS(g.add_edge(DetectionEdge{x, p, PointObservation{Vec3::Zero(), bad}}));
  CHECK_THROWS(g.add_edge(DetectionEdge{x, p, PointObservation{Vec3::Zero(), -Mat3::Identity()}}));

  g.set_unique_detection_pairs(true);
  g.add_edge(DetectionEdge{x, p, PointObservation{}});
  CHECK_THROWS_AS(g.add_edge(DetectionEdge{x, p, PointObservation{}}), StructuralError);
}

TEST_CASE("edge_error examples") {
  Graph g;
  const NodeId a = g.add_pose_node(Pose(Rotation::about_z(0.2), Vec3(1, 2, 0)), true);
  const NodeId b = g.add_pose_node(Pose(Rotation::about_z(0.5), Vec3(2, 3, 1)));
  const Pose actual = relative(g.pose_node(a).estimate, g.pose_node(b).estimate);
  const std::size_t odo = g.add_edge(OdometryEdge{a, b, actual, Mat6::Identity()});
  CHECK(edge_error(g, g.edges()[odo]).norm() < 1e-15);

  Graph h;
  const NodeId x = h.add_pose_node(Pose(), true);
  const NodeId p = h.add_landmark_node(0, Vec3(2, 0, 0));
  const std::size_t det = h.add_edge(DetectionEdge{x, p, PointObservation{Vec3(2, 0, 0), Mat3::Identity()}});
  CHECK(edge_error(h, h.edges()[det]).norm() == 0.0);
  std::get<Vec3>(h.landmark_node(p).estimate).x() += 0.1;
  const Eigen::VectorXd r = edge_error(h, h.edges()[det]);
  CHECK((r - Vec3(0.1, 0, 0)).norm() < 1e-12);
  CHECK(chi2(h) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("edge_error is zero iff the measurement is satisfied") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 50; ++i) {
    Graph g;
    const Pose xp = oracle::random_pose(rng);
    const Pose lp = oracle::random_pose(rng);
    const NodeId x = g.add_pose_node(xp, true);
    const NodeId l = g.add_landmark_node(0, lp);
    const std::size_t e = g.add_edge(DetectionEdge{x, l, PoseObservation{relative(xp, lp), Mat6::Identity()}});
    CHECK(edge_error(g, g.edges()[e]).norm() < 1e-9);
    oracle::perturb(g, l, Eigen::VectorXd::Constant(6, 1e-3));
    CHECK(edge_error(g, g.edges()[e]).norm() > 1e-4);
  }
}

TEST_CASE("chi2 equals the sum of independently computed edge terms") {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 20; ++i) {
    const Graph g = oracle::random_graph(rng, {.poses = 8, .landmarks = 4});
    CHECK(chi2(g) == doctest::Approx(oracle::chi2_by_edges(g)).epsilon(1e-12));
    CHECK(chi2(g) >= 0.0);
  }
  Fig2Graph f;
  CHECK(chi2(f.g) < 1e-18);
}

TEST_CASE("chi2 is invariant under node relabeling") {
  std::mt19937_64 rng(23);
  const Graph g = oracle::random_graph(rng, {.poses = 6, .landmarks = 3});
  // Re-insert every node under a shuffled id.
  std::vector<NodeId> ids;
  for (const auto& [id, n] : g.nodes()) ids.push_back(id);
  std::vector<NodeId> shuffled = ids;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::map<NodeId, NodeId> map;
  for (std::size_t k = 0; k < ids.size(); ++k) map[ids[k]] = NodeId{shuffled[k].value + 100};
  Graph h;
  for (const auto& [id, n] : g.nodes()) {
    Node copy = n;
    std::visit([&](auto& x) { x.id = map[id]; }, copy);
    h.insert_node(copy);
  }
  for (const Edge& e : g.edges()) {
    Edge copy = e;
    std::visit(
        [&](auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, OdometryEdge>) {
            x.from = map[x.from];
            x.to = map[x.to];
          } else if constexpr (std::is_same_v<T, DetectionEdge>) {
            x.pose = map[x.pose];
            x.landmark = map[x.landmark];
          } else {
            x.node = map[x.node];
          }
        },
        copy);
    h.add_edge(copy);
  }
  CHECK(chi2(h) == doctest::Approx(chi2(g)).epsilon(1e-14));
}

TEST_CASE("analytic Jacobians match central differences") {
  std::mt19937_64 rng(24);
  for (int i = 0; i < 20; ++i) {
    const Graph g = oracle::random_graph(rng, {.poses = 5, .landmarks = 3, .init_noise = 0.3});
    for (const Edge& e : g.edges()) {
      const EdgeTerm t = evaluate_edge(g, e, true);
      for (int k = 0; k < t.node_count; ++k) {
        const Eigen::MatrixXd fd = oracle::fd_jacobian(g, e, t.nodes[k]);
        const Eigen::MatrixXd an = t.jacobians[k];
        CHECK((an - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
      }
    }
  }
}

TEST_CASE("linearize") {
  Fig2Graph f;
  const LinearSystem sys = linearize(f.g);
  CHECK(sys.b.norm() < 1e-12);
  CHECK(sys.ordering.free_nodes.size() == 4);  // x0 is fixed
  CHECK(sys.ordering.dimension == 6 + 6 + 6 + 3);

  SUBCASE("block pattern equals variable adjacency") {
    std::set<std::pair<int, int>> expected;
    auto blk = [&](NodeId id) { return *sys.ordering.index_of(id); };
    for (const Edge& e : f.g.edges()) {
      const EdgeTerm t = evaluate_edge(f.g, e, false);
      std::vector<int> free;
      for (int k = 0; k < t.node_count; ++k) {
        if (auto idx = sys.ordering.index_of(t.nodes[k])) free.push_back(*idx);
      }
      for (int a : free)
        for (int b : free) expected.emplace(a, b);
    }
    std::set<std::pair<int, int>> actual;
    const Eigen::MatrixXd H = sys.H;
    const auto& ord = sys.ordering;
    for (std::size_t a = 0; a < ord.free_nodes.size(); ++a) {
      for (std::size_t b = 0; b < ord.free_nodes.size(); ++b) {
        if (H.block(ord.offsets[a], ord.offsets[b], ord.dims[a], ord.dims[b]).norm() > 0) {
          actual.emplace(static_cast<int>(a), static_cast<int>(b));
        }
      }
    }
    CHECK(actual == expected);
    CHECK(actual.count({blk(f.x2), blk(f.l0)}) == 0);
  }

  SUBCASE("H and b agree with the dense whitened Jacobian") {
    std::mt19937_64 rng(25);
    const Graph g = oracle::random_graph(rng, {.poses = 6, .landmarks = 3, .init_noise = 0.2});
    const LinearSystem s = linearize(g);
    const Eigen::MatrixXd J = oracle::dense_jacobian(g, s.ordering.free_nodes);
    const Eigen::VectorXd r = oracle::whitened_residuals(g);
    const Eigen::MatrixXd H = s.H;
    CHECK((H - J.transpose() * J).norm() <= 1e-5 * H.norm());
    CHECK((s.b - J.transpose() * r).norm() <= 1e-5 * std::max(1.0, s.b.norm()));
  }

  SUBCASE("a free component with no anchor is a gauge deficiency") {
    Graph g;
    const NodeId a = g.add_pose_node(Pose(), true);
    const NodeId b = g.add_pose_node(Pose());
    const NodeId c = g.add_pose_node(Pose());
    const NodeId d = g.add_pose_node(Pose());
    g.add_edge(OdometryEdge{a, b, Pose(), Mat6::Identity()});
    g.add_edge(OdometryEdge{c, d, Pose(), Mat6::Identity()});
    CHECK_THROWS_AS(linearize(g), GaugeError);
  }
}

TEST_CASE("information matrices stay valid") {
  std::mt19937_64 rng(26);
  for (int i = 0; i < 10; ++i) {
    const Graph g = oracle::random_graph(rng, {});
    for (const Edge& e : g.edges()) CHECK(is_valid_information(oracle::edge_information(e)));
  }
}

TEST_CASE("graph text dump round trip") {
  std::mt19937_64 rng(27);
  const Graph g = oracle::random_graph(rng, {.poses = 7, .landmarks = 4});
  const std::string text = dump_graph(g);
  const Graph back = parse_graph(text);
  CHECK(dump_graph(back) == text);
  CHECK(back.node_count() == g.node_count());
  CHECK(back.edge_count() == g.edge_count());
  CHECK(chi2(back) == chi2(g));
  CHECK(text.find("POSE 0 ") == 0);
  CHECK(text.find("FIXED") != std::string::npos);

  CHECK_THROWS_AS(parse_graph("POSE 0 0 1 2\n"), InputError);
  try {
    parse_graph("# header\nPOSE 0 0 0 0 0 0 0 0 1\nEDGE_ODOM 0 7 0 0 0 0 0 0 1\n");
    FAIL("expected an input error");
  } catch (const InputError& e) {
    CHECK(e.line() == 3);
  }
}
