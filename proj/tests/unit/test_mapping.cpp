#include "forestnav/mapping.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <vector>

#include "doctest.h"
#include "forestnav/geometry.hpp"
#include "forestnav/world.hpp"

using namespace forestnav;

namespace {

// 1x1 image whose single ray leaves the camera along +z.
DepthImage single_ray_image(float depth) {
  DepthImage img;
  img.intrinsics = CameraIntrinsics{1, 1, 1.0, 1.0, 0.0, 0.0};
  img.timestamp = 0.0;
  img.depths = {depth};
  return img;
}

struct VoxelCounts {
  int at_miss = 0;
  int at_hit = 0;
  int other_nonzero = 0;
};

VoxelCounts count_voxels(const OccupancySubmap& map) {
  VoxelCounts c;
  const float miss = static_cast<float>(map.config().l_miss);
  const float hit = static_cast<float>(map.config().l_hit);
  map.for_each_voxel([&](int, int, int, float lo) {
    if (lo == 0.0f) return;
    if (lo == miss) {
      ++c.at_miss;
    } else if (lo == hit) {
      ++c.at_hit;
    } else {
      ++c.other_nonzero;
    }
  });
  return c;
}

Keyframe make_kf(int id, const Pose& T = Pose::Identity()) {
  Keyframe kf;
  kf.id = id;
  kf.timestamp = static_cast<double>(id);
  kf.T_WS = T;
  return kf;
}

// Camera basis with the optical axis along world +x, image right along -y,
// image down along -z.
Pose camera_facing_x(const Vec3& position) {
  Eigen::Matrix3d R;
  R.col(0) = Vec3(0, -1, 0);
  R.col(1) = Vec3(0, 0, -1);
  R.col(2) = Vec3(1, 0, 0);
  return Pose(Quat(R), position);
}

}  // namespace

TEST_CASE("single ray marks about fifty misses and one hit") {
  OccupancySubmap map(0, Pose::Identity(), MappingConfig{});
  map.integrate_depth(Pose::Identity(), single_ray_image(5.0f));

  const VoxelCounts c = count_voxels(map);
  CHECK(c.at_hit == 1);
  CHECK(c.at_miss >= 49);
  CHECK(c.at_miss <= 51);
  CHECK(c.other_nonzero == 0);

  // All touched voxels sit on the ray column, endpoint at z = 5.
  map.for_each_voxel([&](int ix, int iy, int iz, float lo) {
    if (lo == 0.0f) return;
    const Vec3 center = map.voxel_center(ix, iy, iz);
    CHECK(std::abs(center.x()) < 0.1);
    CHECK(std::abs(center.y()) < 0.1);
    CHECK(center.z() > -0.1);
    CHECK(center.z() < 5.1);
    if (lo > 0.0f) CHECK(center.z() == doctest::Approx(5.05).epsilon(0.02));
  });
}

TEST_CASE("fully invalid image leaves the submap untouched") {
  OccupancySubmap map(0, Pose::Identity(), MappingConfig{});
  DepthImage img;
  img.intrinsics = CameraIntrinsics{4, 3, 2.0, 2.0, 1.5, 1.0};
  img.depths.assign(12, 0.0f);
  map.integrate_depth(Pose::Identity(), img);
  CHECK(map.empty());
  CHECK(map.classify_local(Vec3(0, 0, 1)) == OccupancyClass::Unknown);
}

TEST_CASE("carving enabled frees space along invalid rays without endpoint hits") {
  MappingConfig cfg;
  cfg.carve_invalid_range_m = 3.0;
  OccupancySubmap map(0, Pose::Identity(), cfg);
  map.integrate_depth(Pose::Identity(), single_ray_image(0.0f));

  const VoxelCounts c = count_voxels(map);
  CHECK(c.at_hit == 0);
  CHECK(c.other_nonzero == 0);
  CHECK(c.at_miss >= 29);
  CHECK(c.at_miss <= 31);
  // The carve endpoint itself is a miss, not a hit.
  CHECK(map.log_odds_at(Vec3(0.05, 0.05, 2.95)) == doctest::Approx(cfg.l_miss));
}

TEST_CASE("repeated integration accumulates log-odds additively") {
  OccupancySubmap map(0, Pose::Identity(), MappingConfig{});
  const DepthImage img = single_ray_image(2.0f);
  map.integrate_depth(Pose::Identity(), img);
  map.integrate_depth(Pose::Identity(), img);

  // Endpoint voxel saw two hits, ray voxels two misses.
  CHECK(map.log_odds_at(Vec3(0.05, 0.05, 2.05)) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(map.log_odds_at(Vec3(0.05, 0.05, 1.05)) == doctest::Approx(-1.4).epsilon(1e-6));
}

TEST_CASE("log-odds clamp to configured bounds") {
  OccupancySubmap map(0, Pose::Identity(), MappingConfig{});
  const DepthImage img = single_ray_image(2.0f);
  for (int i = 0; i < 9; ++i) map.integrate_depth(Pose::Identity(), img);
  CHECK(map.log_odds_at(Vec3(0.05, 0.05, 2.05)) == doctest::Approx(5.0));   // 9 > 5
  CHECK(map.log_odds_at(Vec3(0.05, 0.05, 1.05)) == doctest::Approx(-5.0));  // -6.3 < -5
}

TEST_CASE("three misses against a relaxed free threshold classify Free") {
  MappingConfig cfg;
  cfg.alpha = -1.0;
  OccupancySubmap map(0, Pose::Identity(), cfg);
  const DepthImage img = single_ray_image(5.0f);
  const Vec3 mid(0.05, 0.05, 2.55);

  map.integrate_depth(Pose::Identity(), img);
  CHECK(map.classify_local(mid) == OccupancyClass::Unknown);  // -0.7 not < -1.0
  map.integrate_depth(Pose::Identity(), img);
  map.integrate_depth(Pose::Identity(), img);
  CHECK(map.log_odds_at(mid) == doctest::Approx(-2.1).epsilon(1e-6));
  CHECK(map.classify_local(mid) == OccupancyClass::Free);
  // Endpoint got three hits: occupied.
  CHECK(map.classify_local(Vec3(0.05, 0.05, 5.05)) == OccupancyClass::Occupied);
}

TEST_CASE("untouched voxels stay exactly unknown") {
  OccupancySubmap map(0, Pose::Identity(), MappingConfig{});
  CHECK(map.empty());
  CHECK(map.log_odds_at(Vec3(1, 2, 3)) == 0.0f);
  CHECK(map.classify_local(Vec3(1, 2, 3)) == OccupancyClass::Unknown);

  map.integrate_depth(Pose::Identity(), single_ray_image(2.0f));
  CHECK_FALSE(map.empty());
  // Off-ray voxel inside the same allocated brick region.
  CHECK(map.log_odds_at(Vec3(0.35, 0.05, 1.05)) == 0.0f);
  // Far outside the volume.
  CHECK(map.log_odds_at(Vec3(1e6, 0, 0)) == 0.0f);
  CHECK(map.classify_local(Vec3(1e6, 0, 0)) == OccupancyClass::Unknown);
}

TEST_CASE("rays clipped at the volume boundary never place endpoint hits") {
  OccupancySubmap map(0, Pose::Identity(), MappingConfig{});
  map.integrate_depth(Pose::Identity(), single_ray_image(100.0f));  // beyond 25.6 half side
  const VoxelCounts c = count_voxels(map);
  CHECK(c.at_hit == 0);
  CHECK(c.at_miss > 200);  // carved out to the far face

  // A ray fully outside the volume is a no-op.
  OccupancySubmap far_map(0, Pose::Identity(), MappingConfig{});
  far_map.integrate_depth(Pose(quat_from_yaw(0.0), Vec3(1000, 0, 0)), single_ray_image(2.0f));
  CHECK(far_map.empty());
}

TEST_CASE("integration rejects an image whose buffer mismatches its intrinsics") {
  OccupancySubmap map(0, Pose::Identity(), MappingConfig{});
  DepthImage img;
  img.intrinsics = CameraIntrinsics{4, 3, 2.0, 2.0, 1.5, 1.0};
  img.depths.assign(11, 1.0f);
  CHECK_THROWS_AS(map.integrate_depth(Pose::Identity(), img), std::invalid_argument);
}

TEST_CASE("submap contents are rigidly attached to the host keyframe pose") {
  const Pose P1(quat_from_yaw(0.3), Vec3(2, -1, 0.5));
  OccupancySubmap map(7, P1, MappingConfig{});
  // Camera placed at the host pose: the single ray runs along the submap
  // frame's z axis regardless of where the host sits in the world.
  map.integrate_depth(P1, single_ray_image(2.0f));
  map.integrate_depth(P1, single_ray_image(2.0f));

  std::vector<std::tuple<int, int, int, float>> before;
  map.for_each_voxel([&](int x, int y, int z, float lo) { before.emplace_back(x, y, z, lo); });

  const Vec3 p_local(0.05, 0.05, 2.05);
  CHECK(map.classify_local(p_local) == OccupancyClass::Occupied);
  CHECK(map.classify_world(P1 * p_local) == OccupancyClass::Occupied);

  const Pose P2(quat_from_yaw(-1.2), Vec3(-10, 4, 1));
  map.set_T_WSk(P2);

  std::vector<std::tuple<int, int, int, float>> after;
  map.for_each_voxel([&](int x, int y, int z, float lo) { after.emplace_back(x, y, z, lo); });
  CHECK(before == after);

  CHECK(map.classify_local(p_local) == OccupancyClass::Occupied);
  CHECK(map.classify_world(P2 * p_local) == OccupancyClass::Occupied);
  CHECK(map.classify_world(P1 * p_local) == OccupancyClass::Unknown);
}

TEST_CASE("submap creation cadence") {
  SUBCASE("n = 2 over ten keyframes yields five submaps") {
    SubmapCollection collection{MappingConfig{}};
    std::vector<int> hosts;
    for (int id = 0; id < 10; ++id) {
      if (auto idx = collection.maybe_create_submap(make_kf(id), 2)) {
        hosts.push_back(collection.submap(static_cast<size_t>(*idx)).host_keyframe_id());
      }
    }
    CHECK(collection.size() == 5);
    CHECK(hosts == std::vector<int>{1, 3, 5, 7, 9});
  }
  SUBCASE("n = 1 creates one submap per keyframe") {
    SubmapCollection collection{MappingConfig{}};
    for (int id = 0; id < 4; ++id) collection.maybe_create_submap(make_kf(id), 1);
    CHECK(collection.size() == 4);
  }
  SUBCASE("n = 4") {
    SubmapCollection collection{MappingConfig{}};
    for (int id = 0; id < 11; ++id) collection.maybe_create_submap(make_kf(id), 4);
    CHECK(collection.size() == 2);
    CHECK(collection.submap(0).host_keyframe_id() == 3);
    CHECK(collection.submap(1).host_keyframe_id() == 7);
  }
  SUBCASE("n < 1 is rejected") {
    SubmapCollection collection{MappingConfig{}};
    CHECK_THROWS_AS(collection.maybe_create_submap(make_kf(0), 0), std::invalid_argument);
  }
}

TEST_CASE("collection integrates into the newest submap only") {
  SubmapCollection collection{MappingConfig{}};
  CHECK_FALSE(collection.integrate_depth(Pose::Identity(), single_ray_image(2.0f)));

  collection.maybe_create_submap(make_kf(0), 1);
  collection.maybe_create_submap(make_kf(1), 1);
  CHECK(collection.integrate_depth(Pose::Identity(), single_ray_image(2.0f)));
  CHECK(collection.submap(0).empty());
  CHECK_FALSE(collection.submap(1).empty());
}

TEST_CASE("keyframe pose updates reach only the hosted submap") {
  SubmapCollection collection{MappingConfig{}};
  collection.maybe_create_submap(make_kf(0), 1);
  collection.maybe_create_submap(make_kf(1), 1);

  const Pose corrected(quat_from_yaw(0.7), Vec3(1, 2, 3));
  collection.update_keyframe_pose(0, corrected);
  CHECK(collection.submap(0).T_WSk().isApprox(corrected, 1e-12));
  CHECK(collection.submap(1).T_WSk().isApprox(Pose::Identity(), 1e-12));
}

TEST_CASE("clearing a sphere injects free evidence without erasing hits") {
  MappingConfig cfg;
  OccupancySubmap map(0, Pose(quat_from_yaw(0.3), Vec3(1, 2, 0)), cfg);

  const Vec3 center_w(1.5, 2.5, 1.2);
  // One miss per call: Free requires log-odds below alpha = -2.0.
  map.clear_sphere(center_w, 0.5);
  CHECK(map.classify_world(center_w) == OccupancyClass::Unknown);
  map.clear_sphere(center_w, 0.5);
  map.clear_sphere(center_w, 0.5);
  CHECK(map.log_odds_at(map.T_WSk().inverse() * center_w) ==
        doctest::Approx(3.0 * cfg.l_miss).epsilon(1e-6));
  CHECK(map.classify_world(center_w) == OccupancyClass::Free);
  CHECK(map.classify_world(center_w + Vec3(0.0, 0.0, 0.4)) == OccupancyClass::Free);

  // Outside the ball nothing was touched.
  CHECK(map.log_odds_at(map.T_WSk().inverse() * (center_w + Vec3(0.0, 0.0, 0.7))) == 0.0f);

  // A strongly occupied voxel inside the ball keeps its verdict.
  OccupancySubmap hit_map(1, Pose::Identity(), cfg);
  const DepthImage img = single_ray_image(2.0f);
  for (int i = 0; i < 6; ++i) hit_map.integrate_depth(Pose::Identity(), img);
  const Vec3 endpoint(0.05, 0.05, 2.05);
  REQUIRE(hit_map.classify_world(endpoint) == OccupancyClass::Occupied);
  hit_map.clear_sphere(endpoint, 0.3);
  CHECK(hit_map.classify_world(endpoint) == OccupancyClass::Occupied);

  CHECK_THROWS_AS(hit_map.clear_sphere(endpoint, 0.0), std::invalid_argument);

  // Collection forwards to the newest submap only.
  SubmapCollection collection{cfg};
  CHECK_FALSE(collection.clear_sphere(center_w, 0.5));
  collection.maybe_create_submap(make_kf(0), 1);
  collection.maybe_create_submap(make_kf(1), 1);
  for (int i = 0; i < 3; ++i) CHECK(collection.clear_sphere(Vec3(0, 0, 1), 0.4));
  CHECK(collection.submap(1).classify_world(Vec3(0, 0, 1)) == OccupancyClass::Free);
  CHECK(collection.submap(0).classify_world(Vec3(0, 0, 1)) == OccupancyClass::Unknown);
}

TEST_CASE("an occupied verdict vetoes free across submaps") {
  SubmapCollection collection{MappingConfig{}};
  const DepthImage hit_img = single_ray_image(2.0f);
  const DepthImage long_img = single_ray_image(5.0f);

  collection.maybe_create_submap(make_kf(0), 1);
  collection.integrate_depth(Pose::Identity(), hit_img);
  collection.integrate_depth(Pose::Identity(), hit_img);  // endpoint now Occupied

  collection.maybe_create_submap(make_kf(1), 1);
  for (int i = 0; i < 4; ++i) collection.integrate_depth(Pose::Identity(), long_img);
  // The newer submap saw the same point as free space (-2.8 < alpha).

  const Vec3 p(0.05, 0.05, 2.05);
  CHECK(collection.submap(0).classify_world(p) == OccupancyClass::Occupied);
  CHECK(collection.submap(1).classify_world(p) == OccupancyClass::Free);

  const auto cls = collection.classify(p, 5);
  CHECK(cls.aggregate == OccupancyClass::Occupied);
  REQUIRE(cls.per_submap.size() == 2);
  CHECK(cls.per_submap[0] == std::pair<int, OccupancyClass>{1, OccupancyClass::Free});
  CHECK(cls.per_submap[1] == std::pair<int, OccupancyClass>{0, OccupancyClass::Occupied});

  // Restricting the window to the newest submap drops the veto.
  CHECK(collection.classify(p, 1).aggregate == OccupancyClass::Free);

  // Snapshot view agrees with the collection.
  SubmapQuery query(collection, 5);
  const MappingConfig& cfg = collection.config();
  CHECK(query.aggregate(p, cfg.alpha, cfg.beta) == OccupancyClass::Occupied);
  SubmapQuery newest_only(collection, 1);
  CHECK(newest_only.aggregate(p, cfg.alpha, cfg.beta) == OccupancyClass::Free);
  CHECK(query.aggregate(Vec3(20, 20, 20), cfg.alpha, cfg.beta) == OccupancyClass::Unknown);
}

TEST_CASE("mesh extraction emits culled voxel faces") {
  OccupancySubmap map(0, Pose::Identity(), MappingConfig{});
  const DepthImage img = single_ray_image(2.0f);

  SUBCASE("one isolated occupied voxel gives twelve triangles") {
    map.integrate_depth(Pose::Identity(), img);
    map.integrate_depth(Pose::Identity(), img);
    const TriangleMesh mesh = map.extract_mesh();
    CHECK(mesh.triangles.size() == 12);
    CHECK(mesh.vertices.size() == 8);

    Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
    for (const auto& v : mesh.vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    CHECK(lo.isApprox(Vec3(0.0, 0.0, 2.0), 1e-9));
    CHECK(hi.isApprox(Vec3(0.1, 0.1, 2.1), 1e-9));
  }

  SUBCASE("two face-adjacent occupied voxels give twenty triangles") {
    const Pose shifted(quat_from_yaw(0.0), Vec3(0.1, 0.0, 0.0));
    map.integrate_depth(Pose::Identity(), img);
    map.integrate_depth(Pose::Identity(), img);
    map.integrate_depth(shifted, img);
    map.integrate_depth(shifted, img);
    const TriangleMesh mesh = map.extract_mesh();
    CHECK(mesh.triangles.size() == 20);
    CHECK(mesh.vertices.size() == 12);
  }
}

TEST_CASE("occupied voxels hug the analytic surface of a rendered scene") {
  ForestWorldConfig wc;
  wc.side_m = 40.0;
  wc.explicit_trees = std::vector<Tree>{{Vec3(3.0, 0.0, 0.0), 0.3, 6.0}};
  const ForestWorld world = ForestWorld::generate(wc);

  const Pose T_WC = camera_facing_x(Vec3(0, 0, 1.5));
  const CameraIntrinsics k = CameraIntrinsics::from_fov(64, 48, 90.0);
  DepthImage img = raycast_depth(world, T_WC, k, 20.0, 0.0, 0);

  OccupancySubmap map(0, Pose::Identity(), MappingConfig{});
  map.integrate_depth(T_WC, img);
  map.integrate_depth(T_WC, img);

  int occupied = 0;
  double worst = 0.0;
  map.for_each_voxel([&](int ix, int iy, int iz, float lo) {
    if (!(lo > map.config().beta)) return;
    ++occupied;
    const double d = std::abs(world.surface_distance(map.voxel_center(ix, iy, iz)));
    worst = std::max(worst, d);
  });
  CHECK(occupied > 50);
  CHECK(worst <= 0.1);
}

TEST_CASE("submap json dump lists nonzero voxels with the host pose") {
  const Pose host(quat_from_yaw(0.5), Vec3(1, 2, 3));
  OccupancySubmap map(42, host, MappingConfig{});
  map.integrate_depth(host, single_ray_image(2.0f));

  int nonzero = 0;
  map.for_each_voxel([&](int, int, int, float lo) {
    if (lo != 0.0f) ++nonzero;
  });

  const nlohmann::json j = map.to_json();
  CHECK(j["host_keyframe_id"] == 42);
  CHECK(j["resolution_m"] == doctest::Approx(0.1));
  CHECK(j["voxels"].size() == static_cast<size_t>(nonzero));
  CHECK(j["T_WSk"]["r"][2] == doctest::Approx(3.0));
}
