#ifndef FORESTNAV_PLANNER_HPP
#define FORESTNAV_PLANNER_HPP

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "forestnav/geometry.hpp"
#include "forestnav/mapping.hpp"

namespace forestnav {

struct Path {
  std::vector<Vec3> waypoints;  // world frame; consecutive entries distinct
  double length() const;
};

struct Reference {
  Vec3 r = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 v = Vec3::Zero();
  double t = 0.0;
};

struct ReferenceTrajectory {
  std::vector<Reference> refs;
  bool empty() const { return refs.empty(); }
  size_t size() const { return refs.size(); }
};

struct PlannerParams {
  unsigned int seed = 1;
  double radius_m = 0.6;  // swept safety radius
  int last_S = 5;         // submap look-back for the free-space check
  double alpha = -2.0;    // log-odds free threshold used for planning
  // The planning budget is deterministic: budget_s converts to an iteration
  // cap through iterations_per_second; max_iterations overrides it when > 0.
  double budget_s = 0.5;
  double iterations_per_second = 1600.0;
  int max_iterations = 0;
  double goal_bias = 0.1;
  double max_edge_m = 2.0;
  // Stop early once the solution cost drops within this factor of the
  // straight-line distance.
  double stop_cost_ratio = 1.02;
  // Sampling box: axis-aligned around start/goal, expanded by the margins,
  // with z additionally clamped to [min_z_m, max_z_m] (the box always keeps
  // start and goal inside).
  double margin_xy_m = 6.0;
  double margin_z_m = 1.0;
  double min_z_m = 0.9;  // keep the swept radius clear of the ground
  double max_z_m = 2.5;
};

struct PlanResult {
  std::optional<Path> path;
  double cost = std::numeric_limits<double>::infinity();
  double first_solution_cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int nodes = 0;
  bool informed = false;         // informed sampling phase was entered
  int informed_violations = 0;   // accepted informed samples outside the ellipsoid
};

/// True iff the swept volume from a to b — a cylinder of the given radius
/// plus a half-sphere cap at b — classifies Free at every sample point under
/// the aggregate rule over the last_S most recent submaps. Sample pitch is
/// half the map resolution. The cap at a is not checked: chained segments
/// cover it with the previous segment's end cap.
bool is_segment_valid(const Vec3& a, const Vec3& b, double radius,
                      const SubmapCollection& collection, int last_S, double alpha);

/// Same check against a prebuilt query snapshot (explicit pitch/thresholds).
bool is_segment_valid(const Vec3& a, const Vec3& b, double radius, SubmapQuery& query,
                      double pitch, double alpha, double beta);

/// Informed RRT* over the observed free space. Samples uniformly in the
/// params box (goal-biased), restricts sampling to the prolate hyperspheroid
/// of (start, goal, best cost) once a first solution exists, rewires per
/// RRT*, and shortcuts the extracted path. Deterministic for a fixed seed.
/// No solution within the iteration budget -> result with empty path.
PlanResult plan(const Vec3& start, const Vec3& goal, const SubmapCollection& collection,
                const PlannerParams& params);

/// Time-parameterizes a piecewise-linear path: corner speed at interior
/// waypoints is v_max * (1 - theta/pi) for turn angle theta, each segment
/// runs a trapezoidal speed profile honoring a_max, references are sampled
/// every dt, yaw follows the direction of travel, and the final reference
/// stops exactly at the last waypoint. v_start seeds the initial speed;
/// initial_yaw is used until the direction of travel is defined; timestamps
/// start at t0. Throws std::invalid_argument on an empty path or
/// nonpositive v_max/a_max/dt.
ReferenceTrajectory path_to_trajectory(const Path& path, double v_max, double a_max,
                                       double dt, double v_start = 0.0,
                                       double initial_yaw = 0.0, double t0 = 0.0);

std::string path_to_csv(const Path& path);
std::string trajectory_to_csv(const ReferenceTrajectory& traj);

}  // namespace forestnav

#endif  // FORESTNAV_PLANNER_HPP
