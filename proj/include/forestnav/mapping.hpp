#ifndef FORESTNAV_MAPPING_HPP
#define FORESTNAV_MAPPING_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "forestnav/estimator.hpp"
#include "forestnav/geometry.hpp"
#include "forestnav/mesh.hpp"
#include "forestnav/world.hpp"

namespace forestnav {

enum class OccupancyClass { Free, Occupied, Unknown };

struct MappingConfig {
  double resolution_m = 0.1;
  double root_side_m = 51.2;  // must be a multiple of 8 * resolution
  double l_hit = 1.0;
  double l_miss = -0.7;
  double l_min = -5.0;
  double l_max = 5.0;
  double alpha = -2.0;  // Free iff log_odds < alpha
  double beta = 1.5;    // Occupied iff log_odds > beta
  int keyframes_per_submap = 2;
  // When > 0, pixels with no depth return carve free space along the ray up
  // to this range (miss updates only, no endpoint hit). Off by default: a
  // fully invalid depth image then leaves the submap untouched.
  double carve_invalid_range_m = 0.0;
};

/// Log-odds occupancy volume expressed in a host keyframe's frame. Storage is
/// a sparse octree whose leaves are 8x8x8 voxel bricks; voxels never touched
/// by a ray stay at log-odds exactly 0 (unknown). The world pose is an alias
/// of the host keyframe pose and may be updated retroactively; submap-frame
/// contents are unaffected by such updates.
class OccupancySubmap {
 public:
  OccupancySubmap(int host_keyframe_id, const Pose& T_WSk, const MappingConfig& config);

  int host_keyframe_id() const { return host_keyframe_id_; }
  const Pose& T_WSk() const { return T_WSk_; }
  void set_T_WSk(const Pose& T);

  /// Integrates one depth image taken at world camera pose T_WC: along each
  /// valid pixel's ray, voxels strictly before the measured endpoint receive
  /// a miss update and the endpoint voxel a hit update, clamped to
  /// [l_min, l_max]. Throws std::invalid_argument when the image buffer does
  /// not match its intrinsics.
  void integrate_depth(const Pose& T_WC, const DepthImage& depth);

  /// Applies one miss update to every voxel whose center lies within the
  /// ball around the world-frame point: injects known-free evidence, e.g.
  /// the collision-free volume the vehicle itself occupies, which no
  /// camera ray can ever observe. Additive like any other update, so hit
  /// evidence is not erased.
  void clear_sphere(const Vec3& p_W, double radius_m);

  /// Log-odds at a submap-frame point; 0 outside the volume or untouched.
  float log_odds_at(const Vec3& p_S) const;
  OccupancyClass classify_local(const Vec3& p_S) const;
  OccupancyClass classify_world(const Vec3& p_W) const;

  bool empty() const { return bricks_.empty(); }
  /// Bounds of all touched voxels, in submap-frame meters. Meaningful only
  /// when !empty().
  Vec3 aabb_min() const;
  Vec3 aabb_max() const;

  /// Visits every allocated voxel as (ix, iy, iz, log_odds); untouched
  /// voxels inside allocated bricks are visited with value 0.
  void for_each_voxel(const std::function<void(int, int, int, float)>& fn) const;

  /// Submap-frame center of the voxel holding index (ix, iy, iz).
  Vec3 voxel_center(int ix, int iy, int iz) const;

  /// Occupied-surface extraction in the submap frame: one quad (two
  /// triangles) per occupied-voxel face not shared with another occupied
  /// voxel.
  TriangleMesh extract_mesh() const;

  /// Voxel dump: header (resolution, host keyframe id, pose) plus the list
  /// of allocated voxels with nonzero log-odds.
  nlohmann::json to_json() const;

  const MappingConfig& config() const { return config_; }
  int voxels_per_side() const { return voxels_per_side_; }

  /// Repeated-query accessor that caches the last brick; valid as long as no
  /// integration runs concurrently.
  class Cursor {
   public:
    explicit Cursor(const OccupancySubmap& map) : map_(&map) {}
    float log_odds(const Vec3& p_S);

   private:
    const OccupancySubmap* map_;
    int bx_ = -1, by_ = -1, bz_ = -1;
    int32_t brick_slot_ = 0;
  };

 private:
  friend class Cursor;
  static constexpr int kBrickSide = 8;
  static constexpr int kBrickVoxels = kBrickSide * kBrickSide * kBrickSide;
  struct Brick {
    std::array<float, kBrickVoxels> lo{};
  };

  bool in_bounds(int ix, int iy, int iz) const {
    return ix >= 0 && iy >= 0 && iz >= 0 && ix < voxels_per_side_ &&
           iy < voxels_per_side_ && iz < voxels_per_side_;
  }
  float* voxel_for_write(int ix, int iy, int iz);
  int32_t brick_slot_at(int bx, int by, int bz) const;  // 0 when absent
  void apply_update(float* v, double delta);
  void traverse_ray(const Vec3& o_S, const Vec3& e_S, bool endpoint_is_hit);

  int host_keyframe_id_;
  Pose T_WSk_;
  Pose T_SkW_;  // cached inverse, kept in sync with T_WSk_
  MappingConfig config_;
  int voxels_per_side_;
  int tree_depth_;  // levels above the brick level
  double half_side_m_;

  // Octree: nodes_[i] holds 8 child slots; slot 0 = absent, positive =
  // internal node index, negative = -(brick index + 1). nodes_[0] is the
  // root.
  std::vector<std::array<int32_t, 8>> nodes_;
  std::vector<Brick> bricks_;
  std::vector<std::array<uint16_t, 3>> brick_base_;  // voxel coords of brick origin

  int aabb_min_[3] = {0, 0, 0};
  int aabb_max_[3] = {0, 0, 0};
  bool touched_ = false;
};

/// Ordered set of submaps following keyframe order; owns submap creation
/// cadence and fans keyframe pose corrections out to hosted submaps.
class SubmapCollection {
 public:
  explicit SubmapCollection(const MappingConfig& config);

  /// Counts keyframes and creates a submap hosted by `keyframe` when the
  /// count reaches n (then resets). n >= 1 or std::invalid_argument.
  std::optional<int> maybe_create_submap(const Keyframe& keyframe, int n);

  /// Integrates into the most recent submap; false when none exists yet.
  bool integrate_depth(const Pose& T_WC, const DepthImage& depth);

  /// clear_sphere on the most recent submap; false when none exists yet.
  bool clear_sphere(const Vec3& p_W, double radius_m);

  /// Applies a retroactive keyframe pose update to all submaps it hosts.
  void update_keyframe_pose(int keyframe_id, const Pose& T_WS);

  struct Classification {
    OccupancyClass aggregate = OccupancyClass::Unknown;
    std::vector<std::pair<int, OccupancyClass>> per_submap;  // (submap index, class)
  };

  /// Per-submap classes over the last_S most recent submaps plus the
  /// aggregate: Occupied if any says Occupied (an Occupied verdict vetoes
  /// Free), else Free if any says Free, else Unknown.
  Classification classify(const Vec3& p_W, int last_S) const;

  TriangleMesh extract_mesh() const;

  size_t size() const { return submaps_.size(); }
  const OccupancySubmap& submap(size_t i) const { return submaps_[i]; }
  OccupancySubmap& submap(size_t i) { return submaps_[i]; }
  const MappingConfig& config() const { return config_; }

 private:
  MappingConfig config_;
  std::vector<OccupancySubmap> submaps_;
  int keyframes_since_submap_ = 0;
};

/// Snapshot view for high-rate point classification over the last_S submaps:
/// precomputes inverse poses and keeps one brick cursor per submap. Poses are
/// frozen at construction.
class SubmapQuery {
 public:
  SubmapQuery(const SubmapCollection& collection, int last_S);

  /// Aggregate class under explicit thresholds (alpha < 0 < beta).
  OccupancyClass aggregate(const Vec3& p_W, double alpha, double beta);

  bool empty() const { return entries_.empty(); }

 private:
  struct Entry {
    const OccupancySubmap* map;
    Pose T_SkW;
    OccupancySubmap::Cursor cursor;
  };
  std::vector<Entry> entries_;
};

}  // namespace forestnav

#endif  // FORESTNAV_MAPPING_HPP
