#include "dualpg/evaluation.hpp"

#include "dualpg/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

namespace dualpg {

namespace {

// Index of the sample with the stamp closest to t.
std::size_t nearest_stamp(const Trajectory& traj, double t) {
  const auto it = std::lower_bound(traj.begin(), traj.end(), t,
                                   [](const StampedPose& s, double v) { return s.t < v; });
  std::size_t hi = static_cast<std::size_t>(it - traj.begin());
  if (hi == traj.size()) return traj.size() - 1;
  if (hi == 0) return 0;
  return (t - traj[hi - 1].t) <= (traj[hi].t - t) ? hi - 1 : hi;
}

}  // namespace

StampMatch associate_stamps(const Trajectory& est, const Trajectory& gt, double tolerance) {
  StampMatch out;
  if (gt.empty()) {
    out.unmatched = est.size();
    return out;
  }
  for (std::size_t i = 0; i < est.size(); ++i) {
    const std::size_t j = nearest_stamp(gt, est[i].t);
    if (std::abs(gt[j].t - est[i].t) <= tolerance) {
      out.pairs.emplace_back(i, j);
    } else {
      ++out.unmatched;
    }
  }
  return out;
}

Pose align_se3(std::span<const Vec3> est, std::span<const Vec3> gt) {
  if (est.size() != gt.size()) throw DegenerateError("alignment inputs differ in length");
  const auto n = static_cast<Eigen::Index>(est.size());
  if (n < 3) throw DegenerateError("alignment needs at least 3 correspondences");

  Vec3 mu_e = Vec3::Zero();
  Vec3 mu_g = Vec3::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    mu_e += est[i];
    mu_g += gt[i];
  }
  mu_e /= static_cast<double>(n);
  mu_g /= static_cast<double>(n);

  Eigen::Matrix3Xd E(3, n), G(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    E.col(i) = est[i] - mu_e;
    G.col(i) = gt[i] - mu_g;
  }
  for (const Eigen::Matrix3Xd* pts : {&E, &G}) {
    const Vec3 sv = Eigen::JacobiSVD<Eigen::MatrixXd>(*pts).singularValues();
    if (!(sv(0) > 0) || sv(1) <= 1e-9 * sv(0)) {
      throw DegenerateError("alignment points are collinear");
    }
  }

  const Mat3 H = E * G.transpose();
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 U = svd.matrixU();
  const Mat3 V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  if ((V * U.transpose()).determinant() < 0) D(2, 2) = -1.0;
  const Mat3 R = V * D * U.transpose();
  return Pose(Rotation::from_matrix(R), mu_g - R * mu_e);
}

AteResult ate(const Trajectory& est, const Trajectory& gt, double tolerance) {
  const StampMatch match = associate_stamps(est, gt, tolerance);
  std::vector<Vec3> e, g;
  e.reserve(match.pairs.size());
  g.reserve(match.pairs.size());
  for (const auto& [i, j] : match.pairs) {
    e.push_back(est[i].pose.translation());
    g.push_back(gt[j].pose.translation());
  }
  AteResult out;
  out.alignment = align_se3(e, g);
  out.matched = match.pairs.size();
  out.unmatched = match.unmatched;
  double sq_t = 0.0;
  double sq_r = 0.0;
  for (const auto& [i, j] : match.pairs) {
    const Pose aligned = out.alignment * est[i].pose;
    sq_t += (aligned.translation() - gt[j].pose.translation()).squaredNorm();
    const double ang = rotational_distance(aligned.rotation(), gt[j].pose.rotation());
    sq_r += ang * ang;
  }
  const double n = static_cast<double>(match.pairs.size());
  out.trans_rmse = std::sqrt(sq_t / n);
  out.rot_rmse = std::sqrt(sq_r / n) * 180.0 / std::numbers::pi;
  return out;
}

Stat mean_std(std::span<const double> values) {
  Stat s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / values.size();
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / values.size());
  return s;
}

CorrectionReport gate_crossing_correction(const Trajectory& corrected, const Trajectory& raw,
                                          std::span<const GatePrior> gates,
                                          std::span<const double> lap_stamps,
                                          double approach_radius) {
  CorrectionReport out;
  std::vector<double> all;
  const int laps = lap_stamps.size() < 2 ? 0 : static_cast<int>(lap_stamps.size()) - 1;
  for (int lap = 0; lap < laps; ++lap) {
    const double begin = lap_stamps[lap];
    const double end = lap_stamps[lap + 1];
    const bool last = lap + 1 == laps;
    std::vector<double> values;
    for (const GatePrior& gate : gates) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_k = 0;
      for (std::size_t k = 0; k < corrected.size(); ++k) {
        const double t = corrected[k].t;
        if (t < begin || (last ? t > end : t >= end)) continue;
        const double d = (corrected[k].pose.translation() - gate.pose.translation()).norm();
        if (d < best) {
          best = d;
          best_k = k;
        }
      }
      if (!(best <= approach_radius) || raw.empty()) {
        out.excluded.emplace_back(lap, gate.semantic_id);
        continue;
      }
      const Pose& r = raw[nearest_stamp(raw, corrected[best_k].t)].pose;
      values.push_back((corrected[best_k].pose.translation() - r.translation()).norm());
    }
    out.laps.push_back(mean_std(values));
    all.insert(all.end(), values.begin(), values.end());
    out.per_lap_values.push_back(std::move(values));
  }
  out.overall = mean_std(all);
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(p / 100.0 * static_cast<double>(values.size()));
  const std::size_t idx = std::clamp<std::size_t>(static_cast<std::size_t>(rank), 1, values.size());
  return values[idx - 1];
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

MetricsReport summarize(const RunArtifacts& run, const EvaluationInputs& inputs) {
  MetricsReport m;
  m.nodes = run.nodes;
  m.edges = run.edges;
  m.detection_edges = run.detection_edges;
  m.keyframes = run.keyframes;
  m.landmarks = run.landmarks;
  m.accepted_detections = run.accepted_detections;
  m.rejected = run.rejected;
  for (const KeyframeDiagnostics& d : run.diagnostics) m.opt_times_ms.push_back(d.main_opt.wall_ms);
  m.opt_p50_ms = percentile(m.opt_times_ms, 50.0);
  m.opt_p95_ms = percentile(m.opt_times_ms, 95.0);
  if (inputs.ground_truth && !inputs.ground_truth->empty()) {
    m.corrected_ate = ate(run.corrected, *inputs.ground_truth, inputs.stamp_tolerance);
    m.raw_ate = ate(run.raw, *inputs.ground_truth, inputs.stamp_tolerance);
  }
  if (!inputs.lap_stamps.empty() && !inputs.gates.empty()) {
    m.correction = gate_crossing_correction(run.corrected, run.raw, inputs.gates,
                                            inputs.lap_stamps, inputs.approach_radius);
  }
  return m;
}

}  // namespace dualpg
