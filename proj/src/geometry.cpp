#include "forestnav/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace forestnav {

Quat quat_from_yaw(double yaw) {
  return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
}

double yaw_of(const Quat& q) {
  // Heading of the rotated body x axis projected onto the world xy plane.
  const Vec3 x_axis = q * Vec3::UnitX();
  return std::atan2(x_axis.y(), x_axis.x());
}

Quat canonical_sign(const Quat& q) {
  const double c[4] = {q.w(), q.x(), q.y(), q.z()};
  for (double v : c) {
    if (v > 0.0) return q;
    if (v < 0.0) return Quat(-q.w(), -q.x(), -q.y(), -q.z());
  }
  return q;
}

double angular_distance(const Quat& a, const Quat& b) {
  const double d = std::min(1.0, std::abs(a.dot(b)));
  return 2.0 * std::acos(d);
}

Pose::Pose(const Quat& q, const Vec3& r) : q_(q), r_(r) {
  const double n = q_.norm();
  if (std::abs(n - 1.0) > 1e-6) {
    throw std::invalid_argument("Pose: quaternion norm deviates from 1 by more than 1e-6");
  }
  q_.normalize();
}

Pose Pose::operator*(const Pose& other) const {
  Pose out;
  out.q_ = (q_ * other.q_).normalized();
  out.r_ = q_ * other.r_ + r_;
  return out;
}

Pose Pose::inverse() const {
  Pose out;
  out.q_ = q_.conjugate();
  out.r_ = -(out.q_ * r_);
  return out;
}

bool Pose::isApprox(const Pose& other, double tol) const {
  return (r_ - other.r_).norm() <= tol &&
         std::min((q_.coeffs() - other.q_.coeffs()).norm(),
                  (q_.coeffs() + other.q_.coeffs()).norm()) <= tol;
}

Quat weighted_quaternion_average(const std::vector<Quat>& quats,
                                 const std::vector<double>& weights) {
  if (quats.empty()) {
    throw std::invalid_argument("weighted_quaternion_average: empty input");
  }
  if (quats.size() != weights.size()) {
    throw std::invalid_argument("weighted_quaternion_average: size mismatch");
  }
  double weight_sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) {
      throw std::invalid_argument("weighted_quaternion_average: negative weight");
    }
    weight_sum += w;
  }
  if (weight_sum <= 0.0) {
    throw std::invalid_argument("weighted_quaternion_average: all-zero weights");
  }

  Eigen::Matrix4d accum = Eigen::Matrix4d::Zero();
  for (size_t i = 0; i < quats.size(); ++i) {
    Eigen::Vector4d v(quats[i].w(), quats[i].x(), quats[i].y(), quats[i].z());
    accum += (weights[i] / weight_sum) * (v * v.transpose());
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> solver(accum);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("weighted_quaternion_average: eigensolver failed");
  }
  // Eigenvalues are sorted ascending; the dominant eigenvector is last.
  const Eigen::Vector4d v = solver.eigenvectors().col(3);
  Quat q(v[0], v[1], v[2], v[3]);
  q.normalize();
  return canonical_sign(q);
}

Pose interpolate_from_identity(const Pose& T, double lambda) {
  const Quat q = Quat::Identity().slerp(lambda, T.q());
  return Pose(q.normalized(), lambda * T.r());
}

}  // namespace forestnav
