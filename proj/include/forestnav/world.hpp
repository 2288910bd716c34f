#ifndef FORESTNAV_WORLD_HPP
#define FORESTNAV_WORLD_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "forestnav/geometry.hpp"
#include "forestnav/mesh.hpp"

namespace forestnav {

/// Vertical trunk cylinder standing on the ground plane (z = 0).
struct Tree {
  Vec3 center{0.0, 0.0, 0.0};  // z component is always 0
  double radius = 0.3;         // [m]
  double height = 6.0;         // [m]
};

struct ForestWorldConfig {
  uint64_t seed = 1;
  double side_m = 128.0;
  double density_per_ha = 378.0;
  double min_spacing_m = 1.5;  // center-to-center clearance between trunks
  double radius_min_m = 0.15;
  double radius_max_m = 0.4;
  double height_min_m = 4.0;
  double height_max_m = 10.0;
  // When non-empty, placement sampling is skipped and this list is used as-is.
  std::vector<Tree> explicit_trees;
};

/// Pinhole camera, optical convention: z forward, x right, y down.
struct CameraIntrinsics {
  int width = 640;
  int height = 480;
  double fx = 320.0;
  double fy = 320.0;
  double cx = 319.5;
  double cy = 239.5;

  /// Intrinsics for a given horizontal field of view, square pixels.
  static CameraIntrinsics from_fov(int width, int height, double hfov_deg);
};

/// Z-depth image: per-pixel distance along the optical axis. Values <= 0
/// mark invalid pixels (no return within range).
struct DepthImage {
  CameraIntrinsics intrinsics;
  double timestamp = 0.0;
  std::vector<float> depths;

  float at(int u, int v) const { return depths[static_cast<size_t>(v) * intrinsics.width + u]; }
  bool valid(int u, int v) const { return at(u, v) > 0.0f; }
  size_t valid_count() const;
};

/// Procedural ground-truth forest: depth synthesis source, collision oracle
/// and evaluation geometry. Immutable after generation.
class ForestWorld {
 public:
  /// Seeded rejection sampling of ceil(side^2/1e4 * density) trunks with the
  /// configured minimum spacing. Throws std::runtime_error when the density
  /// is infeasible under the spacing after bounded attempts.
  static ForestWorld generate(const ForestWorldConfig& config);

  const std::vector<Tree>& trees() const { return trees_; }
  double side() const { return config_.side_m; }
  const ForestWorldConfig& config() const { return config_; }

  /// True iff a sphere of mav_radius at p intersects a trunk (strictly) or
  /// the ground plane.
  bool collides(const Vec3& p, double mav_radius_m) const;

  /// Unsigned distance from p to the nearest surface: ground plane or any
  /// trunk boundary (lateral surface and caps).
  double surface_distance(const Vec3& p) const;

  /// Triangulated trunks plus ground patch; vertex spacing <= resolution_m.
  TriangleMesh ground_truth_mesh(double resolution_m) const;

  nlohmann::json to_json() const;
  static ForestWorld from_json(const nlohmann::json& j);
  void save_json(const std::string& path) const;
  static ForestWorld load_json(const std::string& path);

  /// Index of trees whose inflated footprint intersects the cell of (x, y);
  /// used by the raycaster. Cells outside the grid return an empty list.
  const std::vector<int>& trees_near_cell(double x, double y) const;
  double grid_cell_size() const { return cell_size_; }

 private:
  ForestWorld() = default;
  void build_grid();
  const std::vector<int>& cell_at(int cx, int cy) const;

  ForestWorldConfig config_;
  std::vector<Tree> trees_;

  // Uniform 2D grid over [0, side]^2 of tree indices, footprints inflated by
  // the tree radius so a cell lists every trunk overlapping it.
  double cell_size_ = 4.0;
  int grid_dim_ = 0;
  std::vector<std::vector<int>> grid_;
  std::vector<int> empty_cell_;

  friend class RayCaster;
};

/// Per-pixel nearest intersection with trunks and ground from camera pose
/// T_WC, invalid beyond max_range_m. Gaussian depth noise (std noise_std_m)
/// is deterministic per seed; noise 0 reproduces the analytic cast exactly.
DepthImage raycast_depth(const ForestWorld& world, const Pose& T_WC,
                         const CameraIntrinsics& intrinsics, double max_range_m,
                         double noise_std_m, uint64_t seed);

/// Nearest hit along a single world-frame ray (unit direction); negative if
/// no surface within max_range.
double raycast_range(const ForestWorld& world, const Vec3& origin, const Vec3& dir,
                     double max_range);

}  // namespace forestnav

#endif  // FORESTNAV_WORLD_HPP
