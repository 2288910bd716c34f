#include <doctest.h>

#include <cmath>
#include <random>

#include "forestnav/geometry.hpp"

using namespace forestnav;

namespace {

Quat random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q;
}

Vec3 random_vec(std::mt19937_64& rng, double scale = 10.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

}  // namespace

TEST_CASE("translation composed with z rotation maps a unit x point") {
  const Pose T = Pose::Translation(Vec3(1.0, 0.0, 0.0)) * Pose::RotationZ(M_PI / 2.0);
  const Vec3 p = T * Vec3(1.0, 0.0, 0.0);
  CHECK(p.x() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.y() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.z() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("composition is associative and matches sequential application") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    const Pose A(random_quat(rng), random_vec(rng));
    const Pose B(random_quat(rng), random_vec(rng));
    const Pose C(random_quat(rng), random_vec(rng));
    CHECK(((A * B) * C).isApprox(A * (B * C), 1e-9));
    const Vec3 p = random_vec(rng);
    CHECK(((A * B) * p - A * (B * p)).norm() < 1e-9);
  }
}

TEST_CASE("inverse undoes a pose") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const Pose T(random_quat(rng), random_vec(rng));
    CHECK((T * T.inverse()).isApprox(Pose::Identity(), 1e-9));
    CHECK((T.inverse() * T).isApprox(Pose::Identity(), 1e-9));
    const Vec3 p = random_vec(rng);
    CHECK((T.inverse() * (T * p) - p).norm() < 1e-9);
  }
}

TEST_CASE("constructor rejects badly scaled quaternions") {
  CHECK_THROWS_AS(Pose(Quat(2.0, 0.0, 0.0, 0.0), Vec3::Zero()), std::invalid_argument);
  // A tiny deviation is normalized away rather than rejected.
  const Pose T(Quat(1.0 + 1e-8, 0.0, 0.0, 0.0), Vec3::Zero());
  CHECK(T.q().norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("yaw round trip and angular distance") {
  for (double yaw : {-3.0, -1.5, -0.1, 0.0, 0.7, 2.9}) {
    CHECK(yaw_of(quat_from_yaw(yaw)) == doctest::Approx(yaw).epsilon(1e-12));
  }
  const Quat a = quat_from_yaw(0.3);
  const Quat b = quat_from_yaw(1.0);
  CHECK(angular_distance(a, b) == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(angular_distance(b, a) == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(angular_distance(a, a) == doctest::Approx(0.0));
  // Sign flips do not change the metric.
  const Quat b_neg(-b.w(), -b.x(), -b.y(), -b.z());
  CHECK(angular_distance(a, b_neg) == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("canonical sign prefers positive leading component") {
  const Quat q = quat_from_yaw(0.4);
  const Quat flipped(-q.w(), -q.x(), -q.y(), -q.z());
  CHECK(canonical_sign(flipped).w() > 0.0);
  CHECK(canonical_sign(q).coeffs().isApprox(canonical_sign(flipped).coeffs()));
  // w == 0: the first nonzero of (x, y, z) becomes positive.
  Quat half_turn(0.0, 0.0, 0.0, -1.0);
  CHECK(canonical_sign(half_turn).z() == doctest::Approx(1.0));
}

TEST_CASE("average of two equally weighted z rotations lands halfway") {
  const Quat avg = weighted_quaternion_average({quat_from_yaw(0.0), quat_from_yaw(M_PI / 2.0)},
                                               {1.0, 1.0});
  const Quat expected = quat_from_yaw(M_PI / 4.0);
  CHECK(angular_distance(avg, expected) < 1e-6);
}

TEST_CASE("equal-weight pair average is the slerp midpoint") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 30; ++i) {
    Quat a = random_quat(rng);
    Quat b = random_quat(rng);
    if (a.dot(b) < 0.0) b.coeffs() = -b.coeffs();
    if (angular_distance(a, b) > 2.5) continue;  // stay away from the antipode
    const Quat avg = weighted_quaternion_average({a, b}, {1.0, 1.0});
    CHECK(angular_distance(avg, a.slerp(0.5, b)) < 1e-6);
  }
}

TEST_CASE("weighted pair average matches the planar closed form") {
  // For two quaternions the maximizer of w1 (q.a)^2 + w2 (q.b)^2 stays in
  // span{a, b}; writing q = cos(phi) a + sin(phi) e2 with e2 the unit
  // component of b orthogonal to a gives tan(2 phi) =
  // w2 sin(2 om) / (w1 + w2 cos(2 om)), om the 4d angle between a and b.
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int i = 0; i < 30; ++i) {
    Quat a = random_quat(rng);
    Quat b = random_quat(rng);
    if (a.dot(b) < 0.0) b.coeffs() = -b.coeffs();
    const double cos_om = a.dot(b);
    const double om = std::acos(std::min(1.0, cos_om));
    if (om < 1e-3 || om > 1.2) continue;
    const double w1 = u(rng);
    const double w2 = 1.0 - w1;
    const double phi =
        0.5 * std::atan2(w2 * std::sin(2.0 * om), w1 + w2 * std::cos(2.0 * om));
    Eigen::Vector4d va = a.coeffs();  // (x, y, z, w)
    Eigen::Vector4d e2 = (b.coeffs() - cos_om * va).normalized();
    const Eigen::Vector4d vq = std::cos(phi) * va + std::sin(phi) * e2;
    const Quat oracle(vq[3], vq[0], vq[1], vq[2]);
    const Quat avg = weighted_quaternion_average({a, b}, {w1, w2});
    CHECK(angular_distance(avg, oracle) < 1e-6);
  }
}

TEST_CASE("average maximizes the weighted squared-dot objective locally") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Quat> qs;
    std::vector<double> ws;
    // Cluster the inputs so the maximizer is unique and well separated.
    const Quat center = random_quat(rng);
    std::normal_distribution<double> n(0.0, 0.2);
    for (int i = 0; i < 6; ++i) {
      Quat d(1.0, n(rng), n(rng), n(rng));
      d.normalize();
      qs.push_back(center * d);
      ws.push_back(u(rng));
    }
    const Quat avg = weighted_quaternion_average(qs, ws);
    auto objective = [&](const Quat& q) {
      double s = 0.0;
      for (size_t i = 0; i < qs.size(); ++i) s += ws[i] * std::pow(q.dot(qs[i]), 2);
      return s;
    };
    const double at_avg = objective(avg);
    for (int k = 0; k < 40; ++k) {
      Quat perturbed(avg.w() + 1e-3 * n(rng), avg.x() + 1e-3 * n(rng),
                     avg.y() + 1e-3 * n(rng), avg.z() + 1e-3 * n(rng));
      perturbed.normalize();
      CHECK(objective(perturbed) <= at_avg + 1e-12);
    }
  }
}

TEST_CASE("quaternion average properties") {
  std::mt19937_64 rng(31);
  std::vector<Quat> qs;
  std::vector<double> ws;
  for (int i = 0; i < 5; ++i) {
    qs.push_back(random_quat(rng));
    ws.push_back(0.2 + i * 0.3);
  }
  const Quat base = weighted_quaternion_average(qs, ws);

  SUBCASE("invariant to per-input sign flips") {
    auto flipped = qs;
    flipped[1].coeffs() = -flipped[1].coeffs();
    flipped[3].coeffs() = -flipped[3].coeffs();
    CHECK(angular_distance(base, weighted_quaternion_average(flipped, ws)) < 1e-9);
  }
  SUBCASE("invariant to uniform weight scaling") {
    auto scaled = ws;
    for (double& w : scaled) w *= 37.5;
    CHECK(angular_distance(base, weighted_quaternion_average(qs, scaled)) < 1e-9);
  }
  SUBCASE("single input returns that rotation") {
    const Quat q = random_quat(rng);
    CHECK(angular_distance(weighted_quaternion_average({q}, {2.0}), q) < 1e-12);
  }
  SUBCASE("zero-weight entries are ignored") {
    auto qs2 = qs;
    auto ws2 = ws;
    qs2.push_back(random_quat(rng));
    ws2.push_back(0.0);
    CHECK(angular_distance(base, weighted_quaternion_average(qs2, ws2)) < 1e-9);
  }
}

TEST_CASE("quaternion average input validation") {
  CHECK_THROWS_AS(weighted_quaternion_average({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(weighted_quaternion_average({Quat::Identity()}, {1.0, 2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(weighted_quaternion_average({Quat::Identity()}, {-1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(weighted_quaternion_average({Quat::Identity(), Quat::Identity()}, {0.0, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("identity interpolation scales translation and rotation together") {
  const Pose T(quat_from_yaw(1.2), Vec3(4.0, -2.0, 1.0));
  CHECK(interpolate_from_identity(T, 0.0).isApprox(Pose::Identity(), 1e-12));
  CHECK(interpolate_from_identity(T, 1.0).isApprox(T, 1e-12));
  const Pose half = interpolate_from_identity(T, 0.5);
  CHECK(yaw_of(half.q()) == doctest::Approx(0.6).epsilon(1e-9));
  CHECK((half.r() - Vec3(2.0, -1.0, 0.5)).norm() < 1e-12);
  // Fractions compose along the same screw path for rotations about one axis.
  const Pose q1 = interpolate_from_identity(T, 0.25);
  CHECK(yaw_of(q1.q()) == doctest::Approx(0.3).epsilon(1e-9));
}
