#include "dualpg/simulator.hpp"

#include "dualpg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace dualpg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Vec3 gaussian3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return Vec3(x, y, z) * sigma;
}

// Cumulative chord length over a fine parameter grid; maps arc length back
// to the curve parameter by linear interpolation.
class ArcLengthTable {
 public:
  explicit ArcLengthTable(const TrackSpec& spec, int samples = 200000) : spec_(spec) {
    u_.resize(samples + 1);
    s_.resize(samples + 1);
    Vec3 prev = track_point(spec, 0.0);
    s_[0] = 0.0;
    u_[0] = 0.0;
    for (int i = 1; i <= samples; ++i) {
      u_[i] = kTwoPi * i / samples;
      const Vec3 p = track_point(spec, u_[i]);
      s_[i] = s_[i - 1] + (p - prev).norm();
      prev = p;
    }
  }

  double length() const { return s_.back(); }

  double parameter_at(double s) const {
    s = std::fmod(s, length());
    if (s < 0) s += length();
    const auto it = std::upper_bound(s_.begin(), s_.end(), s);
    const std::size_t hi = std::min<std::size_t>(it - s_.begin(), s_.size() - 1);
    const std::size_t lo = hi - 1;
    const double span = s_[hi] - s_[lo];
    const double w = span > 0 ? (s - s_[lo]) / span : 0.0;
    return u_[lo] + w * (u_[hi] - u_[lo]);
  }

  // Pose on the curve with heading along the direction of travel.
  Pose pose_at(double s) const {
    const double u = parameter_at(s);
    const double du = 1e-6;
    const Vec3 d = track_point(spec_, u + du) - track_point(spec_, u - du);
    return Pose(Rotation::about_z(std::atan2(d.y(), d.x())), track_point(spec_, u));
  }

 private:
  TrackSpec spec_;
  std::vector<double> u_;
  std::vector<double> s_;
};

}  // namespace

std::string to_string(TrackShape shape) {
  return shape == TrackShape::Ellipse ? "ellipse" : "lemniscate";
}

TrackShape track_shape_from_string(const std::string& name) {
  if (name == "ellipse") return TrackShape::Ellipse;
  if (name == "lemniscate") return TrackShape::Lemniscate;
  throw ConfigError("unknown track shape '" + name + "'");
}

void TrackSpec::validate() const {
  if (!(a > 0)) throw ConfigError("track.a must be positive");
  if (shape == TrackShape::Ellipse && !(b > 0)) throw ConfigError("track.b must be positive");
  if (gate_count < 2) throw ConfigError("track.gates must be >= 2");
  if (lap_count < 1) throw ConfigError("track.laps must be >= 1");
  if (!(speed > 0)) throw ConfigError("track.speed must be positive");
  if (!(sample_rate >= 10)) throw ConfigError("track.rate must be >= 10 Hz");
  if (!std::isfinite(gate_height)) throw ConfigError("track.height must be finite");
}

void NoiseModel::validate() const {
  const double sigmas[] = {odom_trans_sigma, odom_rot_sigma, odom_bias_drift, det_pos_sigma,
                           det_rot_sigma};
  for (double s : sigmas) {
    if (!(s >= 0)) throw ConfigError("noise sigmas must be non-negative");
  }
  if (!(det_range > 0)) throw ConfigError("noise.det_range must be positive");
  if (!(det_fov > 0 && det_fov <= kTwoPi)) throw ConfigError("noise.det_fov must be in (0, 2pi]");
  if (!(det_dropout >= 0 && det_dropout < 1)) throw ConfigError("noise.dropout must be in [0, 1)");
}

Vec3 track_point(const TrackSpec& spec, double u) {
  if (spec.shape == TrackShape::Ellipse) {
    return {spec.a * std::cos(u), spec.b * std::sin(u), spec.gate_height};
  }
  const double s = std::sin(u);
  const double c = std::cos(u);
  const double den = 1.0 + s * s;
  return {spec.a * c / den, spec.a * s * c / den, spec.gate_height};
}

Track generate_track(const TrackSpec& spec) {
  spec.validate();
  const ArcLengthTable table(spec);
  Track track;
  track.lap_length = table.length();

  for (int i = 0; i < spec.gate_count; ++i) {
    const double s = (i + 0.5) * track.lap_length / spec.gate_count;
    track.gates.push_back({i, table.pose_at(s)});
  }

  const double step = spec.speed / spec.sample_rate;
  const double total = spec.lap_count * track.lap_length;
  const auto samples = static_cast<long>(std::floor(total / step + 1e-9)) + 1;
  track.trajectory.reserve(samples);
  for (long k = 0; k < samples; ++k) {
    track.trajectory.push_back({k / spec.sample_rate, table.pose_at(k * step)});
  }
  for (int j = 0; j <= spec.lap_count; ++j) {
    track.lap_stamps.push_back(j * track.lap_length / spec.speed);
  }
  return track;
}

Trajectory simulate_odometry(const Trajectory& ground_truth, const NoiseModel& noise,
                             std::uint64_t seed) {
  Trajectory out;
  if (ground_truth.empty()) return out;
  out.reserve(ground_truth.size());
  auto rng = make_engine(seed, 1);
  auto bias_rng = make_engine(seed, 2);
  const double heading = std::uniform_real_distribution<double>(0.0, kTwoPi)(bias_rng);
  const Vec3 bias_dir(std::cos(heading), std::sin(heading), 0.0);
  const bool noisy = noise.odom_trans_sigma > 0 || noise.odom_rot_sigma > 0;

  Pose dead_reckoned = ground_truth.front().pose;
  const double t0 = ground_truth.front().t;
  out.push_back(ground_truth.front());
  for (std::size_t k = 1; k < ground_truth.size(); ++k) {
    const Pose delta = relative(ground_truth[k - 1].pose, ground_truth[k].pose);
    dead_reckoned = dead_reckoned * delta;
    if (noisy) {
      const double scale = std::sqrt(delta.translation().norm());
      Twist xi;
      xi.head<3>() = gaussian3(rng, noise.odom_trans_sigma * scale);
      xi.tail<3>() = gaussian3(rng, noise.odom_rot_sigma * scale);
      dead_reckoned = dead_reckoned * exp(xi);
    }
    const double t = ground_truth[k].t;
    const Vec3 drift = noise.odom_bias_drift * (t - t0) * bias_dir;
    out.push_back({t, Pose(dead_reckoned.rotation(), dead_reckoned.translation() + drift)});
  }
  return out;
}

DetectionStream simulate_detections(const Trajectory& ground_truth,
                                    const std::vector<GatePrior>& gates, const NoiseModel& noise,
                                    std::uint64_t seed) {
  DetectionStream out;
  auto rng = make_engine(seed, 3);
  auto drop_rng = make_engine(seed, 4);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  for (const StampedPose& sample : ground_truth) {
    DetectionBatch batch{sample.t, {}};
    std::vector<int> truth;
    for (const GatePrior& gate : gates) {
      const Pose rel = relative(sample.pose, gate.pose);
      const Vec3& p = rel.translation();
      if (p.norm() > noise.det_range || p.x() <= 0.0) continue;
      if (std::abs(std::atan2(p.y(), p.x())) > 0.5 * noise.det_fov) continue;
      ++out.opportunities;
      if (uniform(drop_rng) < noise.det_dropout) continue;
      const Vec3 dp = gaussian3(rng, noise.det_pos_sigma);
      const Vec3 dr = gaussian3(rng, noise.det_rot_sigma);
      const Pose measured(rel.rotation() * Rotation::exp(dr), p + dp);
      batch.detections.push_back({measured, std::nullopt, sample.t});
      truth.push_back(gate.semantic_id);
    }
    if (!batch.detections.empty()) {
      out.batches.push_back(std::move(batch));
      out.truth.push_back(std::move(truth));
    }
  }
  return out;
}

SimRun simulate(const TrackSpec& spec, const NoiseModel& noise) {
  noise.validate();
  Track track = generate_track(spec);
  SimRun run;
  run.odometry = simulate_odometry(track.trajectory, noise, noise.seed);
  DetectionStream dets = simulate_detections(track.trajectory, track.gates, noise, noise.seed);
  run.detections = std::move(dets.batches);
  run.detection_truth = std::move(dets.truth);
  run.ground_truth = std::move(track.trajectory);
  run.gates = std::move(track.gates);
  run.lap_stamps = std::move(track.lap_stamps);
  return run;
}

}  // namespace dualpg
