#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "forestnav/mesh.hpp"
#include "forestnav/sim.hpp"
#include "forestnav/world.hpp"

namespace forestnav {

struct ReconstructionMetrics {
  double accuracy_rmse_m = 0.0;
  double completeness_pct = 0.0;
  size_t reconstructed_vertices = 0;
  size_t ground_truth_vertices = 0;
};

/// Unsigned analytic distance of every vertex to the nearest world surface
/// (trunk walls and caps, ground plane), in vertex order.
std::vector<double> surface_distances(const TriangleMesh& mesh, const ForestWorld& world);

/// RMSE of surface_distances. The squared distances are sorted before
/// summation so the result does not depend on vertex order. Empty mesh →
/// std::invalid_argument.
double reconstruction_accuracy(const TriangleMesh& reconstructed, const ForestWorld& world);

/// Percentage of ground-truth vertices that have a reconstructed vertex
/// within tau_m. Empty ground truth or tau_m <= 0 → std::invalid_argument;
/// empty reconstruction → 0.
double reconstruction_completeness(const TriangleMesh& reconstructed,
                                   const TriangleMesh& ground_truth, double tau_m = 0.5);

ReconstructionMetrics evaluate_reconstruction(const TriangleMesh& reconstructed,
                                              const TriangleMesh& ground_truth,
                                              const ForestWorld& world, double tau_m = 0.5);

/// Keeps the triangles whose vertices all lie inside the box [lo - margin,
/// hi + margin] (margin applied per axis), dropping unreferenced vertices.
TriangleMesh crop_mesh(const TriangleMesh& mesh, const Vec3& lo, const Vec3& hi,
                       double margin_m);

/// Ground-truth mesh restricted to the region a mission can observe: the
/// goal-pattern bounding box padded by the depth range in x/y and capped in z
/// at the highest point the tilted camera can see at full range. Depends only
/// on the config, never on the flown estimate, so SLAM and VIO runs of the
/// same mission are scored against the identical region.
TriangleMesh mission_ground_truth_mesh(const MissionConfig& config, const ForestWorld& world,
                                       double resolution_m);

struct TrajectoryStats {
  double speed_mean_mps = 0.0;
  double speed_q25_mps = 0.0;
  double speed_median_mps = 0.0;
  double speed_q75_mps = 0.0;
  double speed_max_mps = 0.0;
  double distance_m = 0.0;
  double duration_s = 0.0;
  // Position error of the estimate sampled one tick before each loop
  // closure (over the whole log when none fired), and the same error as a
  // percentage of the distance traveled up to that tick.
  double drift_before_closure_m = 0.0;
  double drift_before_closure_pct = 0.0;
};

/// Speed distribution (true speeds, sample quartiles with linear
/// interpolation), distance, duration and drift statistics of a mission log.
/// Empty log → std::invalid_argument.
TrajectoryStats trajectory_stats(const MissionLog& log);

struct ModeRow {
  std::string label;
  ReconstructionMetrics metrics;
  bool completed = false;
  bool collided = false;
  bool planner_aborted = false;
  int loop_closures = 0;
};

struct ComparisonReport {
  // Estimate-frame fusion with loop closures on / off, and the ground-truth
  // pose fusion baseline of each run.
  ModeRow slam;
  ModeRow vio;
  ModeRow gt_slam;
  ModeRow gt_vio;
  TrajectoryStats slam_stats;
  TrajectoryStats vio_stats;
  // First tick at which the two true trajectories differ; -1 when they never
  // do. Both runs share the sensor seeds, so they coincide bit-for-bit until
  // the first loop closure changes a control decision.
  int divergence_tick = -1;
};

/// Runs the identical seeded mission twice — loop closures enabled, then
/// disabled — with ground-truth-pose fusion alongside, and scores all four
/// reconstructions against the mission ground-truth region.
ComparisonReport compare_slam_vio(const MissionConfig& config, double tau_m = 0.5);

nlohmann::json trajectory_stats_to_json(const TrajectoryStats& stats);
nlohmann::json reconstruction_metrics_to_json(const ReconstructionMetrics& metrics);
nlohmann::json comparison_report_to_json(const ComparisonReport& report);

/// Fixed-width table mirroring the comparison report, one row per mode.
std::string comparison_report_table(const ComparisonReport& report);

}  // namespace forestnav
