#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "forestnav/controller.hpp"
#include "forestnav/estimator.hpp"
#include "forestnav/mapping.hpp"
#include "forestnav/planner.hpp"
#include "forestnav/world.hpp"

namespace forestnav {

enum class MissionPattern { Lawnmower, ModifiedLawnmower, ExplicitGoals };

struct MissionRates {
  double slam_hz = 15.0;
  double depth_hz = 5.0;
  double control_hz = 40.0;
};

struct DepthSensorConfig {
  int width = 128;
  int height = 96;
  double hfov_deg = 90.0;
  double max_range_m = 10.0;
  double noise_std_m = 0.0;
};

struct MissionConfig {
  uint64_t seed = 1;
  MissionPattern pattern = MissionPattern::Lawnmower;
  double altitude_m = 1.5;
  double extent_m = 24.0;
  double row_spacing_m = 8.0;
  int revisit_every = 2;  // modified lawnmower only
  // Offset of the pattern within the world; negative components auto-center.
  double pattern_origin_x = -1.0;
  double pattern_origin_y = -1.0;
  std::vector<Vec3> explicit_goals;

  MissionRates rates;
  ForestWorldConfig world;
  EstimatorConfig estimator;
  MappingConfig mapping;
  PlannerParams planner;
  ControllerParams controller;
  DepthSensorConfig depth;

  double v_max = 3.0;
  double a_max = 2.0;
  double traj_dt = 0.1;
  double mav_radius_m = 0.3;      // true-collision oracle radius
  double goal_tolerance_m = 0.6;
  double max_mission_time_s = 600.0;
  int anchors_per_reference = 4;

  // Also fuse the same depth stream into a second submap collection using
  // ground-truth poses (baseline for reconstruction metrics).
  bool fuse_ground_truth = false;
};

nlohmann::json mission_config_to_json(const MissionConfig& config);
/// Requires a "world" object; every other key falls back to its default.
/// Unknown or ill-typed keys raise std::invalid_argument naming the key.
MissionConfig mission_config_from_json(const nlohmann::json& j);

/// Boustrophedon corner goals over [0, extent]^2 at the given altitude:
/// rows spaced row_spacing apart, alternating sweep direction, two goals per
/// row. row_spacing > extent degenerates to a single row.
std::vector<Vec3> generate_lawnmower(double extent_m, double row_spacing_m,
                                     double altitude_m);

/// Lawnmower goals with a back-to-the-previous-row detour appended after
/// every revisit_every-th row, which steers the vehicle through already
/// mapped space and provokes loop closures.
std::vector<Vec3> generate_modified_lawnmower(double extent_m, double row_spacing_m,
                                              double altitude_m, int revisit_every);

/// Goal sequence the mission will fly: the configured pattern placed in the
/// world (negative origin components center it), or explicit_goals verbatim.
/// The first entry is the start position.
std::vector<Vec3> mission_goals(const MissionConfig& config);

struct TickRecord {
  double t = 0.0;
  Vec3 true_r = Vec3::Zero();
  double true_yaw = 0.0;
  Vec3 true_v = Vec3::Zero();
  Vec3 est_r = Vec3::Zero();
  double est_yaw = 0.0;
  Vec3 est_v = Vec3::Zero();
  Vec3 cmd_a = Vec3::Zero();
  double cmd_yaw_rate = 0.0;
  Vec3 ref_r = Vec3::Zero();  // active reference position (est_r when idle)
  int generation = -1;        // -1 when no trajectory is active
  bool collision = false;
};

struct PlanEvent {
  double t = 0.0;
  int goal_index = 0;
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  bool goal_projected = false;
  bool success = false;
  double cost = 0.0;
  int iterations = 0;
};

struct DeformationEvent {
  double t = 0.0;
  int generation = 0;  // generation of the trajectory after the update
  double max_displacement_m = 0.0;
  double end_displacement_m = 0.0;
  int corrected_keyframes = 0;
};

struct MissionLog {
  std::vector<TickRecord> ticks;
  std::vector<PlanEvent> plans;
  std::vector<DeformationEvent> deformations;
  std::vector<int> closure_ticks;  // tick index at which each loop closure fired
  int loop_closures = 0;
  int goals_reached = 0;
  int goals_total = 0;
  double distance_traveled_m = 0.0;
  double final_time_s = 0.0;
  bool completed = false;
  bool collided = false;
  bool planner_aborted = false;
  std::string abort_reason;
  std::optional<SubmapCollection> submaps;  // final map, world frame via hosts
  std::optional<SubmapCollection> gt_submaps;  // ground-truth-pose fusion baseline
};

/// Runs the full closed loop on a simulated clock: truth integration at
/// control rate, drifting estimator at slam rate, depth synthesis and
/// submap fusion at depth rate, planning toward pattern goals with
/// projection into observed free space, trajectory anchoring with
/// deformation on every loop closure, and a true-world collision oracle
/// every tick. Deterministic for a fixed config.
MissionLog run_mission(const MissionConfig& config);

/// Writes ticks.csv, plans.csv, deformations.csv, summary.json and
/// reconstruction.ply under dir (created if missing).
void write_mission_log(const MissionLog& log, const MissionConfig& config,
                       const std::string& dir);

/// Reloads ticks.csv and summary.json from a run directory (plan and
/// deformation events and the submaps are not restored). Throws
/// std::runtime_error on missing or malformed files.
MissionLog read_mission_log(const std::string& dir);

}  // namespace forestnav
