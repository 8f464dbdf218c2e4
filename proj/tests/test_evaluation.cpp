#include "dualpg/errors.hpp"
#include "dualpg/evaluation.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <numeric>

using namespace dualpg;

namespace {

Trajectory random_walk(std::mt19937_64& rng, int n) {
  Trajectory t;
  Pose p;
  for (int k = 0; k < n; ++k) {
    p = p * oracle::random_pose(rng, 1.0, 0.3);
    t.push_back({0.1 * k, p});
  }
  return t;
}

std::vector<Vec3> positions(const Trajectory& t) {
  std::vector<Vec3> out;
  for (const auto& s : t) out.push_back(s.pose.translation());
  return out;
}

Trajectory transformed(const Pose& T, const Trajectory& t) {
  Trajectory out = t;
  for (auto& s : out) s.pose = T * s.pose;
  return out;
}

}  // namespace

TEST_CASE("align_se3") {
  std::mt19937_64 rng(61);
  const Trajectory gt = random_walk(rng, 50);
  const auto g = positions(gt);

  const Pose I = align_se3(g, g);
  CHECK(I.translation().norm() < 1e-9);
  CHECK(I.rotation().angle() < 1e-9);

  for (int i = 0; i < 20; ++i) {
    const Pose T0 = oracle::random_pose(rng, 10.0);
    const auto e = positions(transformed(T0, gt));
    const Pose T = align_se3(e, g);
    const Mat4 expected = oracle::homogeneous(T0.inverse());
    CHECK((oracle::homogeneous(T) - expected).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(ate(transformed(T0, gt), gt, 0.01).trans_rmse < 1e-9);
  }

  std::vector<Vec3> line;
  for (int k = 0; k < 10; ++k) line.push_back(Vec3(k, 2 * k, 0));
  CHECK_THROWS_AS(align_se3(line, line), DegenerateError);
  CHECK_THROWS_AS(align_se3(std::span(g).first(2), std::span(g).first(2)), DegenerateError);
}

TEST_CASE("ate examples") {
  std::mt19937_64 rng(62);
  const Trajectory gt = random_walk(rng, 30);
  const AteResult same = ate(gt, gt, 0.01);
  CHECK(same.trans_rmse < 1e-9);
  CHECK(same.rot_rmse < 1e-6);
  CHECK(same.matched == 30);

  Trajectory shifted = gt;
  for (auto& s : shifted) s.pose = Pose(Vec3(0.5, 0, 0)) * s.pose;
  CHECK(ate(shifted, gt, 0.01).trans_rmse < 1e-9);

  // Vertical residuals of +-0.3 m and +-0.4 m on a planar layout where they
  // have zero mean and zero first moment, so the optimal alignment is the
  // identity and the RMSE is sqrt((0.09 + 0.09 + 0.16 + 0.16) / 4).
  Trajectory toy_gt, toy_est;
  const Vec3 pts[4] = {{2, 0, 0}, {-2, 0, 0}, {-1.5, 5, 0}, {1.5, 5, 0}};
  const double dz[4] = {0.3, -0.3, 0.4, -0.4};
  for (int k = 0; k < 4; ++k) {
    toy_gt.push_back({double(k), Pose(pts[k])});
    toy_est.push_back({double(k), Pose(pts[k] + Vec3(0, 0, dz[k]))});
  }
  const AteResult toy = ate(toy_est, toy_gt, 0.01);
  CHECK(toy.trans_rmse == doctest::Approx(0.353553).epsilon(1e-5));
  CHECK(toy.alignment.translation().norm() < 1e-9);
  CHECK(toy.alignment.rotation().angle() < 1e-9);
}

TEST_CASE("ate is invariant under rigid transforms of the estimate") {
  std::mt19937_64 rng(63);
  const Trajectory gt = random_walk(rng, 40);
  Trajectory est = gt;
  std::normal_distribution<double> n(0.0, 0.2);
  for (auto& s : est) s.pose = s.pose * Pose(Vec3(n(rng), n(rng), n(rng)));
  const AteResult base = ate(est, gt, 0.01);
  for (int i = 0; i < 10; ++i) {
    const AteResult moved = ate(transformed(oracle::random_pose(rng, 20.0), est), gt, 0.01);
    CHECK(std::abs(moved.trans_rmse - base.trans_rmse) < 1e-9);
    CHECK(std::abs(moved.rot_rmse - base.rot_rmse) < 1e-6);
  }
}

TEST_CASE("stamp association") {
  Trajectory gt, est;
  for (int k = 0; k < 10; ++k) gt.push_back({k * 0.1, Pose()});
  est.push_back({0.001, Pose()});
  est.push_back({0.5, Pose()});
  est.push_back({0.57, Pose()});  // 0.02 from the nearest stamp
  est.push_back({5.0, Pose()});
  const StampMatch m = associate_stamps(est, gt, 0.015);
  CHECK(m.pairs.size() == 2);
  CHECK(m.unmatched == 2);
  CHECK(m.pairs[1] == std::pair<std::size_t, std::size_t>{1, 5});
}

TEST_CASE("gate_crossing_correction") {
  TrackSpec spec;
  const Track track = generate_track(spec);
  const Trajectory& raw = track.trajectory;

  const CorrectionReport zero = gate_crossing_correction(raw, raw, track.gates, track.lap_stamps, 8.0);
  CHECK(zero.overall.mean == 0.0);
  CHECK(zero.overall.count == 14);
  CHECK(zero.excluded.empty());

  Trajectory shifted = raw;
  for (auto& s : shifted) s.pose = Pose(Vec3(-1, 0, 0)) * s.pose;
  const CorrectionReport one = gate_crossing_correction(shifted, raw, track.gates, track.lap_stamps, 8.0);
  REQUIRE(one.laps.size() == 2);
  for (const Stat& s : one.laps) {
    CHECK(s.mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.std < 1e-12);
  }

  Trajectory far = raw;
  for (auto& s : far) s.pose = Pose(Vec3(0, 0, 100)) * s.pose;
  const CorrectionReport none = gate_crossing_correction(far, far, track.gates, track.lap_stamps, 8.0);
  CHECK(none.excluded.size() == 14);
}

TEST_CASE("statistics") {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  CHECK(percentile(v, 95) == 95.0);
  CHECK(percentile(v, 50) == 50.0);
  CHECK(percentile({12.0}, 95) == 12.0);
  CHECK(percentile({}, 95) == 0.0);
  std::vector<double> shuffled(v.rbegin(), v.rend());
  CHECK(percentile(shuffled, 95) == 95.0);

  const std::vector<double> s = {1, 2, 3, 4};
  const Stat st = mean_std(s);
  CHECK(st.mean == 2.5);
  CHECK(st.std == doctest::Approx(std::sqrt(1.25)));
  CHECK(st.count == 4);

  CHECK(hex64(fnv1a("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a("a")) == "af63dc4c8601ec8c");
}
