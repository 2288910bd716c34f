#ifndef FORESTNAV_GEOMETRY_HPP
#define FORESTNAV_GEOMETRY_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <vector>

namespace forestnav {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

/// Quaternion for a rotation of `yaw` radians about the world z axis.
Quat quat_from_yaw(double yaw);

/// Yaw (z-axis) angle of the rotation, in (-pi, pi].
double yaw_of(const Quat& q);

/// Deterministic sign convention: w >= 0, ties broken on x, then y, then z.
Quat canonical_sign(const Quat& q);

/// Angle of the relative rotation between a and b, in [0, pi].
double angular_distance(const Quat& a, const Quat& b);

/// Rigid transform T_AB: rotation followed by translation.
///
/// Quaternions are normalized on construction; inputs whose norm deviates
/// from 1 by more than 1e-6 are rejected.
class Pose {
 public:
  Pose() : q_(1.0, 0.0, 0.0, 0.0), r_(Vec3::Zero()) {}
  Pose(const Quat& q, const Vec3& r);

  static Pose Identity() { return Pose(); }
  static Pose Translation(const Vec3& r) { return Pose(Quat::Identity(), r); }
  static Pose RotationZ(double yaw) { return Pose(quat_from_yaw(yaw), Vec3::Zero()); }

  const Quat& q() const { return q_; }
  const Vec3& r() const { return r_; }

  /// Composition: (*this) * other maps points through other, then this.
  Pose operator*(const Pose& other) const;

  /// Transforms a point: rotate then translate.
  Vec3 operator*(const Vec3& p) const { return q_ * p + r_; }

  Pose inverse() const;

  bool isApprox(const Pose& other, double tol = 1e-9) const;

 private:
  Quat q_;
  Vec3 r_;
};

/// Weighted rotation average: the unit quaternion maximizing the weighted sum
/// of squared dot products with the inputs, computed as the dominant
/// eigenvector of the 4x4 weighted outer-product accumulator.
///
/// Weights must be nonnegative with a positive sum. The result carries the
/// canonical sign (w >= 0). Invariant to per-input sign flips and to uniform
/// weight scaling. Throws std::invalid_argument on empty input, length
/// mismatch, negative weights or an all-zero weight vector.
Quat weighted_quaternion_average(const std::vector<Quat>& quats,
                                 const std::vector<double>& weights);

/// Interpolates from the identity towards T by fraction lambda in [0, 1]:
/// slerp on rotation, linear on translation.
Pose interpolate_from_identity(const Pose& T, double lambda);

}  // namespace forestnav

#endif  // FORESTNAV_GEOMETRY_HPP
