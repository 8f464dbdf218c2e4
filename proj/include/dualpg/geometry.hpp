// SE(3)/SO(3) arithmetic used throughout dualpg.
//
// Conventions:
//  - quaternions are exposed in (qx, qy, qz, qw) order,
//  - twists are ordered (rho, phi): translation part first, rotation second,
//  - optimizer increments are right perturbations, P <- P * exp(delta).
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>

namespace dualpg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Lie-algebra coordinate of a pose: head<3>() is rho (meters), tail<3>() is phi (radians).
using Twist = Vec6;

/// Below this angle the exp/log maps switch to their Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;

Mat3 skew(const Vec3& v);

class Rotation {
 public:
  Rotation() : q_(Eigen::Quaterniond::Identity()) {}
  explicit Rotation(const Eigen::Quaterniond& q);

  static Rotation from_xyzw(double qx, double qy, double qz, double qw);
  static Rotation from_matrix(const Mat3& m);
  static Rotation about_z(double angle);
  static Rotation exp(const Vec3& phi);

  /// Rotation vector with angle in [0, pi].
  Vec3 log() const;
  /// Geodesic angle to identity, in [0, pi].
  double angle() const;

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Eigen::Vector4d xyzw() const { return {q_.x(), q_.y(), q_.z(), q_.w()}; }
  Mat3 matrix() const { return q_.toRotationMatrix(); }

  Rotation inverse() const { return Rotation(q_.conjugate()); }
  Rotation operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }
  Vec3 operator*(const Vec3& v) const { return q_ * v; }

 private:
  Eigen::Quaterniond q_;
};

double rotational_distance(const Rotation& a, const Rotation& b);

class Pose {
 public:
  Pose() : translation_(Vec3::Zero()) {}
  Pose(const Rotation& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}
  explicit Pose(const Vec3& translation) : translation_(translation) {}

  static Pose identity() { return {}; }
  static Pose from_matrix(const Mat4& m);
  static Pose exp(const Twist& xi);

  const Rotation& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Pose inverse() const;
  Pose operator*(const Pose& other) const;
  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }

  /// Logarithm valid over the full rotation range; near pi the axis is
  /// recovered from the quaternion, which stays well conditioned.
  Twist log() const;
  Mat4 matrix() const;

 private:
  Rotation rotation_;
  Vec3 translation_;
};

Pose compose(const Pose& a, const Pose& b);
/// inverse(a) * b
Pose relative(const Pose& a, const Pose& b);
Vec3 transform_point(const Pose& pose, const Vec3& p);
double translational_distance(const Pose& a, const Pose& b);

Pose exp(const Twist& xi);
Twist log(const Pose& pose);
/// Strict logarithm: empty when the rotation angle is within 1e-6 of pi,
/// where the rotation vector is not unique.
std::optional<Twist> try_log(const Pose& pose);

/// Adjoint in (rho, phi) ordering: exp(Ad(T) xi) = T exp(xi) T^-1.
Mat6 adjoint(const Pose& pose);

Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_left_jacobian_inverse(const Vec3& phi);
Mat3 so3_right_jacobian_inverse(const Vec3& phi);
Mat6 se3_left_jacobian(const Twist& xi);
Mat6 se3_left_jacobian_inverse(const Twist& xi);
Mat6 se3_right_jacobian_inverse(const Twist& xi);

/// Heading of the body x axis projected onto the horizontal plane.
double yaw_of(const Rotation& r);
double wrap_angle(double a);

}  // namespace dualpg
