#include "dualpg/errors.hpp"
#include "dualpg/solver.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

using namespace dualpg;

namespace {

SolverConfig long_run() {
  SolverConfig c;
  c.max_iterations = 200;
  c.chi2_rel_tol = 1e-15;
  c.step_norm_tol = 1e-14;
  return c;
}

}  // namespace

TEST_CASE("optimize: graph already at the optimum") {
  Graph g;
  const NodeId a = g.add_pose_node(Pose(), true);
  const NodeId b = g.add_pose_node(Pose(Vec3(1, 0, 0)));
  g.add_edge(OdometryEdge{a, b, Pose(Vec3(1, 0, 0)), Mat6::Identity()});
  const OptReport r = optimize(g, SolverConfig{});
  CHECK(r.iterations <= 1);
  CHECK(r.final_chi2 == 0.0);
  CHECK(r.reason == Termination::Converged);
}

TEST_CASE("optimize: two conflicting constraints settle on the weighted mean") {
  Graph g;
  const NodeId a = g.add_pose_node(Pose(), true);
  const NodeId b = g.add_pose_node(Pose(Vec3(0.2, 0, 0)));
  g.add_edge(OdometryEdge{a, b, Pose(Vec3(1, 0, 0)), Mat6::Identity()});
  g.add_edge(OdometryEdge{a, b, Pose(Vec3(2, 0, 0)), Mat6::Identity()});
  const OptReport r = optimize(g, SolverConfig{});
  CHECK(g.pose_node(b).estimate.translation().x() == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(r.final_chi2 == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r.final_chi2 <= r.initial_chi2);
}

TEST_CASE("optimize matches a dense reference optimizer") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 10; ++i) {
    Graph g = oracle::random_graph(rng, {.poses = 10, .landmarks = 3, .init_noise = 0.1});
    Graph ref = g;
    const OptReport r = optimize(g, long_run());
    const double expected = oracle::dense_reference_optimize(ref);
    CHECK(r.final_chi2 == doctest::Approx(expected).epsilon(1e-6));
    CHECK(chi2(g) == doctest::Approx(r.final_chi2).epsilon(1e-12));
  }
}

TEST_CASE("chi2 never increases over accepted steps") {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 30; ++i) {
    Graph g = oracle::random_graph(rng, {.poses = 12, .landmarks = 4, .init_noise = 0.4});
    const OptReport r = optimize(g, SolverConfig{});
    REQUIRE(!r.chi2_history.empty());
    for (std::size_t k = 1; k < r.chi2_history.size(); ++k) {
      CHECK(r.chi2_history[k] <= r.chi2_history[k - 1]);
    }
    CHECK(r.final_chi2 <= r.initial_chi2);
  }
}

TEST_CASE("sparse and dense paths agree") {
  std::mt19937_64 rng(33);
  Graph g = oracle::random_graph(rng, {.poses = 15, .landmarks = 5, .init_noise = 0.2});
  Graph h = g;
  SolverConfig dense;
  SolverConfig sparse;
  sparse.dense_below_blocks = 1;
  const OptReport a = optimize(g, dense);
  const OptReport b = optimize(h, sparse);
  CHECK(a.final_chi2 == doctest::Approx(b.final_chi2).epsilon(1e-9));
}

TEST_CASE("optimize is deterministic") {
  std::mt19937_64 rng(34);
  Graph g = oracle::random_graph(rng, {.poses = 15, .landmarks = 5, .init_noise = 0.2});
  Graph h = g;
  optimize(g, SolverConfig{});
  optimize(h, SolverConfig{});
  for (const auto& [id, n] : g.nodes()) {
    if (const auto* p = std::get_if<PoseNode>(&n)) {
      const Pose& q = h.pose_node(id).estimate;
      CHECK(p->estimate.translation() == q.translation());
      CHECK(p->estimate.rotation().xyzw() == q.rotation().xyzw());
    }
  }
}

TEST_CASE("solution does not depend on insertion order") {
  std::mt19937_64 rng(35);
  Graph g = oracle::random_graph(rng, {.poses = 8, .landmarks = 3, .init_noise = 0.02});
  // Rebuild with nodes inserted in reverse id order and edges reversed.
  Graph h;
  std::vector<Node> nodes;
  for (const auto& [id, n] : g.nodes()) nodes.push_back(n);
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) h.insert_node(*it);
  for (auto it = g.edges().rbegin(); it != g.edges().rend(); ++it) h.add_edge(*it);
  optimize(g, long_run());
  optimize(h, long_run());
  for (const auto& [id, n] : g.nodes()) {
    if (const auto* p = std::get_if<PoseNode>(&n)) {
      CHECK(translational_distance(p->estimate, h.pose_node(id).estimate) < 1e-9);
    }
  }
}

TEST_CASE("gauge deficiency propagates out of optimize") {
  Graph g;
  const NodeId a = g.add_pose_node(Pose());
  const NodeId b = g.add_pose_node(Pose());
  g.add_edge(OdometryEdge{a, b, Pose(Vec3(1, 0, 0)), Mat6::Identity()});
  CHECK_THROWS_AS(optimize(g, SolverConfig{}), GaugeError);
}

TEST_CASE("solver config validation") {
  SolverConfig c;
  c.max_iterations = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SolverConfig{};
  c.lambda_up = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("marginal information") {
  SUBCASE("single observation from a fixed pose") {
    Graph g;
    const Pose xp(Rotation::about_z(0.7), Vec3(1, 2, 0));
    const NodeId x = g.add_pose_node(xp, true);
    const NodeId p = g.add_landmark_node(0, Vec3(3, 2, 1));
    Mat3 W;
    W << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
    g.add_edge(DetectionEdge{x, p, PointObservation{xp.inverse() * Vec3(3, 2, 1), W}});
    const Mat3 R = xp.rotation().matrix();
    // Residual is expressed in the body frame: J_p = R^T.
    CHECK((marginal_information(g, p) - R * W * R.transpose()).norm() < 1e-12);

    Graph h;
    const NodeId y = h.add_pose_node(xp, true);
    const Pose lp(Rotation::about_z(0.1), Vec3(3, 2, 1));
    const NodeId l = h.add_landmark_node(0, lp);
    Mat6 W6 = Mat6::Identity() * 25;
    W6(0, 0) = 10;
    h.add_edge(DetectionEdge{y, l, PoseObservation{relative(xp, lp), W6}});
    CHECK((marginal_information(h, l) - W6).norm() < 1e-9);
  }

  SUBCASE("two observations add") {
    Graph g;
    const NodeId x0 = g.add_pose_node(Pose(), true);
    const NodeId x1 = g.add_pose_node(Pose(Vec3(1, 0, 0)), true);
    const NodeId p = g.add_landmark_node(0, Vec3(4, 0, 0));
    const double w = 7.0;
    g.add_edge(DetectionEdge{x0, p, PointObservation{Vec3(4, 0, 0), Mat3::Identity() * w}});
    g.add_edge(DetectionEdge{x1, p, PointObservation{Vec3(3, 0, 0), Mat3::Identity() * w}});
    CHECK((marginal_information(g, p) - 2 * w * Mat3::Identity()).norm() < 1e-12);
  }

  SUBCASE("matches the inverse of the dense covariance block") {
    std::mt19937_64 rng(36);
    for (int i = 0; i < 10; ++i) {
      const Graph g = oracle::random_graph(rng, {.poses = 6, .landmarks = 3});
      const LinearSystem sys = linearize(g);
      const Eigen::MatrixXd cov = Eigen::MatrixXd(sys.H).inverse();
      for (const auto& [id, n] : g.nodes()) {
        if (!std::holds_alternative<LandmarkNode>(n)) continue;
        const int k = *sys.ordering.index_of(id);
        const int off = sys.ordering.offsets[k];
        const int dim = sys.ordering.dims[k];
        const Eigen::MatrixXd expected = cov.block(off, off, dim, dim).inverse();
        const Eigen::MatrixXd got = marginal_information(g, id);
        CHECK((got - expected).norm() <= 1e-6 * expected.norm());
      }
    }
  }

  SUBCASE("adding an observation never removes information") {
    std::mt19937_64 rng(37);
    Graph g;
    std::vector<NodeId> poses;
    for (int i = 0; i < 6; ++i) poses.push_back(g.add_pose_node(oracle::random_pose(rng), true));
    const NodeId p = g.add_landmark_node(0, Vec3(1, 1, 1));
    std::normal_distribution<double> n;
    Eigen::MatrixXd prev = Eigen::MatrixXd::Zero(3, 3);
    for (int i = 0; i < 6; ++i) {
      Eigen::Matrix3d A;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) A(r, c) = n(rng);
      const Mat3 W = A * A.transpose() + Mat3::Identity();
      g.add_edge(DetectionEdge{poses[i], p, PointObservation{Vec3(n(rng), n(rng), n(rng)), W}});
      const Eigen::MatrixXd cur = marginal_information(g, p);
      const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cur - prev).eigenvalues();
      CHECK(eig.minCoeff() >= -1e-9);
      const Eigen::VectorXd e_prev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(prev).eigenvalues();
      const Eigen::VectorXd e_cur = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cur).eigenvalues();
      for (int k = 0; k < 3; ++k) CHECK(e_cur(k) >= e_prev(k) - 1e-9);
      prev = cur;
    }
  }

  SUBCASE("fixed node is rejected") {
    Graph g;
    const NodeId x = g.add_pose_node(Pose(), true);
    CHECK_THROWS_AS(marginal_information(g, x), StructuralError);
  }
}
