#include "dualpg/geometry.hpp"

#include <cmath>
#include <numbers>

namespace dualpg {

namespace {

// Below this angle the Jacobian coefficients are evaluated from their series;
// the closed forms lose all precision to cancellation well above kSmallAngle.
constexpr double kSeriesAngle = 1e-2;

// Quaternions already unit to rounding are kept bit-for-bit, so text round
// trips reproduce their input exactly.
Eigen::Quaterniond normalized(const Eigen::Quaterniond& q) {
  Eigen::Quaterniond out = q;
  if (std::abs(out.squaredNorm() - 1.0) > 1e-15) out.normalize();
  return out;
}

// Q(rho, phi) block of the SE(3) left Jacobian.
Mat3 se3_q_block(const Vec3& rho, const Vec3& phi) {
  const double theta = phi.norm();
  const double t2 = theta * theta;
  double c1, c2, c3;
  if (theta < kSeriesAngle) {
    c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
    c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0;
  } else {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    c1 = (theta - s) / (t2 * theta);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta);
  }
  const Mat3 P = skew(phi);
  const Mat3 R = skew(rho);
  const Mat3 PR = P * R;
  const Mat3 RP = R * P;
  const Mat3 PRP = PR * P;
  const Mat3 PP = P * P;
  return 0.5 * R + c1 * (PR + RP + PRP) + c2 * (PP * R + RP * P - 3.0 * PRP) +
         c3 * (PRP * P + PP * R * P);
}

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<     0.0, -v.z(),  v.y(),
         v.z(),    0.0, -v.x(),
        -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(normalized(q)) {}

Rotation Rotation::from_xyzw(double qx, double qy, double qz, double qw) {
  return Rotation(Eigen::Quaterniond(qw, qx, qy, qz));
}

Rotation Rotation::from_matrix(const Mat3& m) { return Rotation(Eigen::Quaterniond(m)); }

Rotation Rotation::about_z(double angle) {
  return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(angle, Vec3::UnitZ())));
}

Rotation Rotation::exp(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < kSmallAngle) {
    const Vec3 v = 0.5 * phi;
    return Rotation(Eigen::Quaterniond(1.0 - theta * theta / 8.0, v.x(), v.y(), v.z()));
  }
  const double half = 0.5 * theta;
  const Vec3 v = (std::sin(half) / theta) * phi;
  return Rotation(Eigen::Quaterniond(std::cos(half), v.x(), v.y(), v.z()));
}

Vec3 Rotation::log() const {
  Eigen::Quaterniond q = q_;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < kSmallAngle) {
    // 2 atan(n / w) / n ~ (2 / w) (1 - n^2 / (3 w^2))
    const double w = q.w();
    return (2.0 / w) * (1.0 - n * n / (3.0 * w * w)) * v;
  }
  const double theta = 2.0 * std::atan2(n, q.w());
  return (theta / n) * v;
}

double Rotation::angle() const {
  return 2.0 * std::atan2(q_.vec().norm(), std::abs(q_.w()));
}

double rotational_distance(const Rotation& a, const Rotation& b) {
  return (a.inverse() * b).angle();
}

Pose Pose::from_matrix(const Mat4& m) {
  return {Rotation::from_matrix(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>()};
}

Pose Pose::exp(const Twist& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  return {Rotation::exp(phi), so3_left_jacobian(phi) * rho};
}

Pose Pose::inverse() const {
  const Rotation inv = rotation_.inverse();
  return {inv, -(inv * translation_)};
}

Pose Pose::operator*(const Pose& other) const {
  return {rotation_ * other.rotation_, rotation_ * other.translation_ + translation_};
}

Twist Pose::log() const {
  const Vec3 phi = rotation_.log();
  Twist xi;
  xi.head<3>() = so3_left_jacobian_inverse(phi) * translation_;
  xi.tail<3>() = phi;
  return xi;
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_.matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Pose compose(const Pose& a, const Pose& b) { return a * b; }

Pose relative(const Pose& a, const Pose& b) {
  const Rotation inv = a.rotation().inverse();
  return {inv * b.rotation(), inv * (b.translation() - a.translation())};
}

Vec3 transform_point(const Pose& pose, const Vec3& p) { return pose * p; }

double translational_distance(const Pose& a, const Pose& b) {
  return (a.translation() - b.translation()).norm();
}

Pose exp(const Twist& xi) { return Pose::exp(xi); }

Twist log(const Pose& pose) { return pose.log(); }

std::optional<Twist> try_log(const Pose& pose) {
  if (pose.rotation().angle() > std::numbers::pi - 1e-6) return std::nullopt;
  return pose.log();
}

Mat6 adjoint(const Pose& pose) {
  const Mat3 R = pose.rotation().matrix();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = R;
  ad.topRightCorner<3, 3>() = skew(pose.translation()) * R;
  ad.bottomRightCorner<3, 3>() = R;
  return ad;
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const double t2 = theta * theta;
  const Mat3 P = skew(phi);
  double a, b;
  if (theta < kSeriesAngle) {
    a = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    b = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  } else {
    a = (1.0 - std::cos(theta)) / t2;
    b = (theta - std::sin(theta)) / (t2 * theta);
  }
  return Mat3::Identity() + a * P + b * P * P;
}

Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
  const double theta = phi.norm();
  const double t2 = theta * theta;
  const Mat3 P = skew(phi);
  double c;
  if (theta < kSeriesAngle) {
    c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    c = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat3::Identity() - 0.5 * P + c * P * P;
}

Mat3 so3_right_jacobian_inverse(const Vec3& phi) { return so3_left_jacobian_inverse(-phi); }

Mat6 se3_left_jacobian(const Twist& xi) {
  const Mat3 J = so3_left_jacobian(xi.tail<3>());
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = J;
  out.topRightCorner<3, 3>() = se3_q_block(xi.head<3>(), xi.tail<3>());
  out.bottomRightCorner<3, 3>() = J;
  return out;
}

Mat6 se3_left_jacobian_inverse(const Twist& xi) {
  const Mat3 J_inv = so3_left_jacobian_inverse(xi.tail<3>());
  const Mat3 Q = se3_q_block(xi.head<3>(), xi.tail<3>());
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = J_inv;
  out.topRightCorner<3, 3>() = -J_inv * Q * J_inv;
  out.bottomRightCorner<3, 3>() = J_inv;
  return out;
}

Mat6 se3_right_jacobian_inverse(const Twist& xi) { return se3_left_jacobian_inverse(-xi); }

double yaw_of(const Rotation& r) {
  const Vec3 x_axis = r * Vec3::UnitX();
  return std::atan2(x_axis.y(), x_axis.x());
}

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

}  // namespace dualpg
