#include "forestnav/anchoring.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>

#include "doctest.h"
#include "forestnav/geometry.hpp"

using namespace forestnav;

namespace {

Keyframe kf_at(int id, const Vec3& r, double yaw = 0.0) {
  Keyframe kf;
  kf.id = id;
  kf.timestamp = static_cast<double>(id);
  kf.T_WS = Pose(quat_from_yaw(yaw), r);
  return kf;
}

ReferenceTrajectory single_ref(const Vec3& r, double yaw = 0.0,
                               const Vec3& v = Vec3::Zero()) {
  ReferenceTrajectory traj;
  traj.refs.push_back({r, quat_from_yaw(yaw), v, 0.0});
  return traj;
}

std::unordered_map<int, Pose> poses_of(const std::vector<Keyframe>& kfs) {
  std::unordered_map<int, Pose> m;
  for (const auto& kf : kfs) m[kf.id] = kf.T_WS;
  return m;
}

}  // namespace

TEST_CASE("binding weights") {
  SUBCASE("K = 1 puts full weight on the nearest keyframe") {
    const std::vector<Keyframe> kfs{kf_at(0, Vec3(1, 0, 0)), kf_at(1, Vec3(5, 0, 0))};
    const AnchoredTrajectory a = bind_trajectory(single_ref(Vec3::Zero()), kfs, 1);
    REQUIRE(a.bindings.size() == 1);
    REQUIRE(a.bindings[0].anchors.size() == 1);
    CHECK(a.bindings[0].anchors[0].keyframe_id == 0);
    CHECK(a.bindings[0].anchors[0].weight == 1.0);
  }
  SUBCASE("distances one and three split three to one") {
    const std::vector<Keyframe> kfs{kf_at(0, Vec3(1, 0, 0)), kf_at(1, Vec3(-3, 0, 0))};
    const AnchoredTrajectory a = bind_trajectory(single_ref(Vec3::Zero()), kfs, 2);
    REQUIRE(a.bindings[0].anchors.size() == 2);
    CHECK(a.bindings[0].anchors[0].weight == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(a.bindings[0].anchors[1].weight == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("four equidistant anchors get a quarter each") {
    const std::vector<Keyframe> kfs{kf_at(0, Vec3(2, 0, 0)), kf_at(1, Vec3(-2, 0, 0)),
                                    kf_at(2, Vec3(0, 2, 0)), kf_at(3, Vec3(0, -2, 0))};
    const AnchoredTrajectory a = bind_trajectory(single_ref(Vec3::Zero()), kfs, 4);
    for (const Anchor& anchor : a.bindings[0].anchors) {
      CHECK(anchor.weight == doctest::Approx(0.25).epsilon(1e-12));
    }
  }
  SUBCASE("a reference coinciding with a keyframe takes its pose exactly") {
    const std::vector<Keyframe> kfs{kf_at(0, Vec3(1, 2, 3)), kf_at(1, Vec3(4, 0, 0))};
    const AnchoredTrajectory a = bind_trajectory(single_ref(Vec3(1, 2, 3)), kfs, 2);
    CHECK(a.bindings[0].anchors[0].keyframe_id == 0);
    CHECK(a.bindings[0].anchors[0].weight == 1.0);
    CHECK(a.bindings[0].anchors[1].weight == 0.0);
    // Deform with unchanged poses stays put even in the degenerate case.
    const AnchoredTrajectory d = deform(a, poses_of(kfs));
    CHECK(d.traj.refs[0].r.isApprox(Vec3(1, 2, 3), 1e-12));
  }
  SUBCASE("K above the keyframe count uses all keyframes") {
    const std::vector<Keyframe> kfs{kf_at(0, Vec3(1, 0, 0)), kf_at(1, Vec3(0, 2, 0))};
    const AnchoredTrajectory a = bind_trajectory(single_ref(Vec3::Zero()), kfs, 10);
    CHECK(a.bindings[0].anchors.size() == 2);
  }
  SUBCASE("invalid arguments throw") {
    CHECK_THROWS_AS(bind_trajectory(single_ref(Vec3::Zero()), {}, 1), std::invalid_argument);
    CHECK_THROWS_AS(bind_trajectory(single_ref(Vec3::Zero()), {kf_at(0, Vec3::Zero())}, 0),
                    std::invalid_argument);
  }
}

TEST_CASE("bound anchors are the nearest keyframes and weights normalize") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<Keyframe> kfs;
  for (int i = 0; i < 30; ++i) {
    kfs.push_back(kf_at(i, Vec3(u(rng), u(rng), u(rng) * 0.1), u(rng) * 0.1));
  }
  ReferenceTrajectory traj;
  for (int j = 0; j < 40; ++j) {
    traj.refs.push_back({Vec3(u(rng), u(rng), 1.5), quat_from_yaw(u(rng) * 0.3),
                         Vec3(u(rng), u(rng), 0) * 0.1, 0.1 * j});
  }
  const int K = 4;
  const AnchoredTrajectory a = bind_trajectory(traj, kfs, K);
  REQUIRE(a.bindings.size() == traj.refs.size());

  for (size_t j = 0; j < a.bindings.size(); ++j) {
    const auto& anchors = a.bindings[j].anchors;
    REQUIRE(anchors.size() == static_cast<size_t>(K));
    double sum = 0.0;
    double worst_selected = 0.0;
    for (const Anchor& anchor : anchors) {
      CHECK(anchor.weight > 0.0);
      sum += anchor.weight;
      const auto kf = std::find_if(kfs.begin(), kfs.end(), [&](const Keyframe& f) {
        return f.id == anchor.keyframe_id;
      });
      REQUIRE(kf != kfs.end());
      worst_selected =
          std::max(worst_selected, (traj.refs[j].r - kf->T_WS.r()).norm());
      // Stored relative pose reproduces the reference at bind time.
      const Pose recon = kf->T_WS * anchor.T_SsSj;
      CHECK(recon.r().isApprox(traj.refs[j].r, 1e-12));
      CHECK(angular_distance(recon.q(), traj.refs[j].q) < 1e-6);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    // No unselected keyframe is strictly closer than a selected one.
    int closer = 0;
    for (const Keyframe& kf : kfs) {
      if ((traj.refs[j].r - kf.T_WS.r()).norm() < worst_selected - 1e-12) ++closer;
    }
    CHECK(closer <= K - 1);
  }
}

TEST_CASE("deform with unchanged poses is the identity") {
  const std::vector<Keyframe> kfs{kf_at(0, Vec3(1, 0, 0), 0.2), kf_at(1, Vec3(0, 3, 0), -0.4),
                                  kf_at(2, Vec3(-2, 1, 0), 0.9)};
  ReferenceTrajectory traj;
  traj.refs.push_back({Vec3(0.5, 0.5, 1.2), quat_from_yaw(0.3), Vec3(1, 0, 0), 0.0});
  traj.refs.push_back({Vec3(1.5, -0.5, 1.2), quat_from_yaw(-0.8), Vec3(0, 2, 0), 0.5});

  const AnchoredTrajectory a = bind_trajectory(traj, kfs, 3);
  const AnchoredTrajectory d = deform(a, poses_of(kfs));
  CHECK(d.generation == a.generation + 1);
  REQUIRE(d.traj.size() == traj.size());
  for (size_t j = 0; j < traj.size(); ++j) {
    CHECK(d.traj.refs[j].r.isApprox(traj.refs[j].r, 1e-9));
    CHECK(angular_distance(d.traj.refs[j].q, traj.refs[j].q) < 1e-9);
    CHECK(d.traj.refs[j].v.isApprox(traj.refs[j].v, 1e-9));
    CHECK(d.traj.refs[j].t == traj.refs[j].t);
  }
}

TEST_CASE("deform commutes with a global rigid transform") {
  const Pose delta(quat_from_yaw(0.6), Vec3(2, -1, 0.3));
  const std::vector<Keyframe> kfs{kf_at(0, Vec3(1, 0, 0), 0.2), kf_at(1, Vec3(0, 2, 0), -0.4),
                                  kf_at(2, Vec3(-1, -1, 0.2), 1.1)};
  ReferenceTrajectory traj;
  traj.refs.push_back({Vec3(0.4, 0.8, 1.3), quat_from_yaw(0.5), Vec3(1.5, 0.2, 0), 0.0});
  traj.refs.push_back({Vec3(-0.6, 0.1, 1.3), quat_from_yaw(-0.2), Vec3(0.3, -1, 0), 0.4});
  const AnchoredTrajectory a = bind_trajectory(traj, kfs, 3);

  std::unordered_map<int, Pose> moved;
  for (const auto& kf : kfs) moved[kf.id] = delta * kf.T_WS;
  const AnchoredTrajectory d = deform(a, moved);

  for (size_t j = 0; j < traj.size(); ++j) {
    const Pose expected = delta * Pose(traj.refs[j].q, traj.refs[j].r);
    CHECK(d.traj.refs[j].r.isApprox(expected.r(), 1e-9));
    CHECK(angular_distance(d.traj.refs[j].q, expected.q()) < 1e-9);
    CHECK(d.traj.refs[j].v.isApprox(delta.q() * traj.refs[j].v, 1e-9));
  }
}

TEST_CASE("single anchor rotating ninety degrees swings the reference around it") {
  const Vec3 anchor_pos(2, 0, 0);
  const std::vector<Keyframe> kfs{kf_at(7, anchor_pos)};
  const Vec3 ref_pos(4, 0, 1.5);
  const Vec3 ref_vel(1, 0, 0);
  const AnchoredTrajectory a = bind_trajectory(single_ref(ref_pos, 0.0, ref_vel), kfs, 1);

  const double ninety = std::numbers::pi / 2.0;
  std::unordered_map<int, Pose> moved{{7, Pose(quat_from_yaw(ninety), anchor_pos)}};
  const AnchoredTrajectory d = deform(a, moved);

  // (4,0) rotates about (2,0) to (2,2); yaw and velocity gain ninety degrees.
  CHECK(d.traj.refs[0].r.isApprox(Vec3(2, 2, 1.5), 1e-12));
  CHECK(angular_distance(d.traj.refs[0].q, quat_from_yaw(ninety)) < 1e-12);
  CHECK(d.traj.refs[0].v.isApprox(Vec3(0, 1, 0), 1e-12));
}

TEST_CASE("pure anchor translations move references at most as far") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Keyframe> kfs;
  for (int i = 0; i < 8; ++i) {
    kfs.push_back(kf_at(i, Vec3(3 * u(rng), 3 * u(rng), 0.2 * u(rng)), 0.5 * u(rng)));
  }
  ReferenceTrajectory traj;
  for (int j = 0; j < 12; ++j) {
    traj.refs.push_back({Vec3(2 * u(rng), 2 * u(rng), 1.5), quat_from_yaw(u(rng)),
                         Vec3(u(rng), u(rng), 0), 0.1 * j});
  }
  const AnchoredTrajectory a = bind_trajectory(traj, kfs, 4);

  const double eps = 0.05;
  std::unordered_map<int, Pose> moved;
  double max_shift = 0.0;
  for (const auto& kf : kfs) {
    const Vec3 shift = eps * Vec3(u(rng), u(rng), u(rng)).normalized();
    max_shift = std::max(max_shift, shift.norm());
    moved[kf.id] = Pose(kf.T_WS.q(), kf.T_WS.r() + shift);
  }
  const AnchoredTrajectory d = deform(a, moved);
  for (size_t j = 0; j < traj.size(); ++j) {
    CHECK((d.traj.refs[j].r - traj.refs[j].r).norm() <= max_shift + 1e-12);
    // Orientations are untouched by pure translations.
    CHECK(angular_distance(d.traj.refs[j].q, traj.refs[j].q) < 1e-9);
    CHECK(d.traj.refs[j].v.isApprox(traj.refs[j].v, 1e-9));
  }
}

TEST_CASE("deform is idempotent for a fixed pose set") {
  const std::vector<Keyframe> kfs{kf_at(0, Vec3(1, 0, 0), 0.1), kf_at(1, Vec3(0, 1, 0), -0.3),
                                  kf_at(2, Vec3(2, 2, 0.1), 0.8)};
  ReferenceTrajectory traj;
  traj.refs.push_back({Vec3(1, 1, 1.4), quat_from_yaw(0.4), Vec3(0.5, -0.2, 0), 0.0});
  const AnchoredTrajectory a = bind_trajectory(traj, kfs, 3);

  std::unordered_map<int, Pose> moved = poses_of(kfs);
  moved[1] = Pose(quat_from_yaw(0.5), Vec3(0.4, 1.2, 0.1));

  const AnchoredTrajectory once = deform(a, moved);
  const AnchoredTrajectory twice = deform(once, moved);
  for (size_t j = 0; j < traj.size(); ++j) {
    CHECK(twice.traj.refs[j].r.isApprox(once.traj.refs[j].r, 1e-12));
    CHECK(angular_distance(twice.traj.refs[j].q, once.traj.refs[j].q) < 1e-12);
    CHECK(twice.traj.refs[j].v.isApprox(once.traj.refs[j].v, 1e-12));
  }
  CHECK(twice.generation == once.generation + 1);
}

TEST_CASE("deform demands poses for every bound anchor") {
  const std::vector<Keyframe> kfs{kf_at(0, Vec3(1, 0, 0)), kf_at(1, Vec3(0, 1, 0))};
  const AnchoredTrajectory a = bind_trajectory(single_ref(Vec3::Zero()), kfs, 2);
  std::unordered_map<int, Pose> partial{{0, kfs[0].T_WS}};
  CHECK_THROWS_AS(deform(a, partial), std::invalid_argument);
}
