#include <forestnav/sim.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <utility>

#include <nlohmann/json.hpp>

#include <forestnav/anchoring.hpp>

namespace forestnav {

namespace {

using nlohmann::json;

constexpr double kTimeEps = 1e-9;
constexpr double kScanYawRate = 0.7;       // rad/s while scanning for free space
constexpr double kPlanRetryPeriod = 0.6;   // s between planning attempts
constexpr double kValidatePeriod = 0.5;    // s between trajectory re-validations
constexpr double kValidateHorizon = 6.0;   // m of reference path re-validated
constexpr double kTrajEndGrace = 2.0;      // s of hover before replanning at the end
constexpr int kGoalSkipFailures = 40;      // consecutive plan failures -> skip goal
constexpr double kPlannerStallAbort = 45.0;  // s without an active trajectory -> abort

// --------------------------------------------------------------------------
// Config JSON

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) {
      if (it.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("config: unknown key " + path + "." + it.key());
    }
  }
}

const json* find_object(const json& j, const std::string& path, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) return nullptr;
  if (!it->is_object()) {
    throw std::invalid_argument("config: " + path + "." + key + " must be an object");
  }
  return &*it;
}

double jnum(const json& j, const std::string& path, const char* key, double fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number()) {
    throw std::invalid_argument("config: " + path + "." + key + " must be a number");
  }
  return it->get<double>();
}

int jint(const json& j, const std::string& path, const char* key, int fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_integer()) {
    throw std::invalid_argument("config: " + path + "." + key + " must be an integer");
  }
  return it->get<int>();
}

uint64_t juint(const json& j, const std::string& path, const char* key, uint64_t fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_unsigned() && !it->is_number_integer()) {
    throw std::invalid_argument("config: " + path + "." + key + " must be an integer");
  }
  return it->get<uint64_t>();
}

bool jbool(const json& j, const std::string& path, const char* key, bool fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) {
    throw std::invalid_argument("config: " + path + "." + key + " must be a boolean");
  }
  return it->get<bool>();
}

std::string pattern_name(MissionPattern p) {
  switch (p) {
    case MissionPattern::Lawnmower: return "lawnmower";
    case MissionPattern::ModifiedLawnmower: return "modified_lawnmower";
    case MissionPattern::ExplicitGoals: return "explicit_goals";
  }
  return "lawnmower";
}

MissionPattern pattern_from_name(const std::string& name) {
  if (name == "lawnmower") return MissionPattern::Lawnmower;
  if (name == "modified_lawnmower") return MissionPattern::ModifiedLawnmower;
  if (name == "explicit_goals") return MissionPattern::ExplicitGoals;
  throw std::invalid_argument("config: pattern must be one of lawnmower, "
                              "modified_lawnmower, explicit_goals (got \"" +
                              name + "\")");
}

}  // namespace

json mission_config_to_json(const MissionConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["pattern"] = pattern_name(c.pattern);
  j["altitude_m"] = c.altitude_m;
  j["extent_m"] = c.extent_m;
  j["row_spacing_m"] = c.row_spacing_m;
  j["revisit_every"] = c.revisit_every;
  j["pattern_origin_x"] = c.pattern_origin_x;
  j["pattern_origin_y"] = c.pattern_origin_y;
  json goals = json::array();
  for (const Vec3& g : c.explicit_goals) goals.push_back({g.x(), g.y(), g.z()});
  j["explicit_goals"] = goals;

  j["rates"] = {{"slam_hz", c.rates.slam_hz},
                {"depth_hz", c.rates.depth_hz},
                {"control_hz", c.rates.control_hz}};

  json w;
  w["seed"] = c.world.seed;
  w["side_m"] = c.world.side_m;
  w["density_per_ha"] = c.world.density_per_ha;
  w["min_spacing_m"] = c.world.min_spacing_m;
  w["radius_range"] = {c.world.radius_min_m, c.world.radius_max_m};
  w["height_range"] = {c.world.height_min_m, c.world.height_max_m};
  json trees = json::array();
  for (const Tree& t : c.world.explicit_trees) {
    trees.push_back({{"x", t.center.x()},
                     {"y", t.center.y()},
                     {"radius", t.radius},
                     {"height", t.height}});
  }
  w["explicit_trees"] = trees;
  j["world"] = w;

  j["estimator"] = {{"seed", c.estimator.seed},
                    {"drift_rate", c.estimator.drift_rate},
                    {"yaw_drift_rate_deg_per_m", c.estimator.yaw_drift_rate_deg_per_m},
                    {"drift_persistence_m", c.estimator.drift_persistence_m},
                    {"keyframe_translation_m", c.estimator.keyframe_translation_m},
                    {"keyframe_rotation_deg", c.estimator.keyframe_rotation_deg},
                    {"loop_closure_enabled", c.estimator.loop_closure_enabled},
                    {"loop_radius_m", c.estimator.loop_radius_m},
                    {"loop_min_keyframe_gap", c.estimator.loop_min_keyframe_gap},
                    {"loop_cooldown_path_m", c.estimator.loop_cooldown_path_m}};

  j["mapping"] = {{"resolution_m", c.mapping.resolution_m},
                  {"root_side_m", c.mapping.root_side_m},
                  {"l_hit", c.mapping.l_hit},
                  {"l_miss", c.mapping.l_miss},
                  {"l_min", c.mapping.l_min},
                  {"l_max", c.mapping.l_max},
                  {"alpha", c.mapping.alpha},
                  {"beta", c.mapping.beta},
                  {"keyframes_per_submap", c.mapping.keyframes_per_submap},
                  {"carve_invalid_range_m", c.mapping.carve_invalid_range_m}};

  j["planner"] = {{"seed", c.planner.seed},
                  {"radius_m", c.planner.radius_m},
                  {"last_S", c.planner.last_S},
                  {"alpha", c.planner.alpha},
                  {"budget_s", c.planner.budget_s},
                  {"iterations_per_second", c.planner.iterations_per_second},
                  {"max_iterations", c.planner.max_iterations},
                  {"goal_bias", c.planner.goal_bias},
                  {"max_edge_m", c.planner.max_edge_m},
                  {"stop_cost_ratio", c.planner.stop_cost_ratio},
                  {"margin_xy_m", c.planner.margin_xy_m},
                  {"margin_z_m", c.planner.margin_z_m},
                  {"min_z_m", c.planner.min_z_m},
                  {"max_z_m", c.planner.max_z_m}};

  j["controller"] = {{"kp", c.controller.kp},
                     {"kd", c.controller.kd},
                     {"a_cmd_max", c.controller.a_cmd_max},
                     {"yaw_gain", c.controller.yaw_gain},
                     {"yaw_rate_max", c.controller.yaw_rate_max}};

  j["depth"] = {{"width", c.depth.width},
                {"height", c.depth.height},
                {"hfov_deg", c.depth.hfov_deg},
                {"max_range_m", c.depth.max_range_m},
                {"noise_std_m", c.depth.noise_std_m}};

  j["flight"] = {{"v_max", c.v_max},
                 {"a_max", c.a_max},
                 {"traj_dt", c.traj_dt},
                 {"mav_radius_m", c.mav_radius_m},
                 {"goal_tolerance_m", c.goal_tolerance_m},
                 {"max_mission_time_s", c.max_mission_time_s},
                 {"anchors_per_reference", c.anchors_per_reference},
                 {"fuse_ground_truth", c.fuse_ground_truth}};
  return j;
}

MissionConfig mission_config_from_json(const json& j) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: top level must be an object");
  }
  check_keys(j, "$",
             {"seed", "pattern", "altitude_m", "extent_m", "row_spacing_m",
              "revisit_every", "pattern_origin_x", "pattern_origin_y",
              "explicit_goals", "rates", "world", "estimator", "mapping",
              "planner", "controller", "depth", "flight"});

  MissionConfig c;
  c.seed = juint(j, "$", "seed", c.seed);
  if (j.contains("pattern")) {
    if (!j["pattern"].is_string()) {
      throw std::invalid_argument("config: $.pattern must be a string");
    }
    c.pattern = pattern_from_name(j["pattern"].get<std::string>());
  }
  c.altitude_m = jnum(j, "$", "altitude_m", c.altitude_m);
  c.extent_m = jnum(j, "$", "extent_m", c.extent_m);
  c.row_spacing_m = jnum(j, "$", "row_spacing_m", c.row_spacing_m);
  c.revisit_every = jint(j, "$", "revisit_every", c.revisit_every);
  c.pattern_origin_x = jnum(j, "$", "pattern_origin_x", c.pattern_origin_x);
  c.pattern_origin_y = jnum(j, "$", "pattern_origin_y", c.pattern_origin_y);
  if (j.contains("explicit_goals")) {
    const json& goals = j["explicit_goals"];
    if (!goals.is_array()) {
      throw std::invalid_argument("config: $.explicit_goals must be an array");
    }
    for (const json& g : goals) {
      if (!g.is_array() || g.size() != 3) {
        throw std::invalid_argument(
            "config: $.explicit_goals entries must be [x, y, z] arrays");
      }
      c.explicit_goals.emplace_back(g[0].get<double>(), g[1].get<double>(),
                                    g[2].get<double>());
    }
  }

  if (const json* r = find_object(j, "$", "rates")) {
    check_keys(*r, "$.rates", {"slam_hz", "depth_hz", "control_hz"});
    c.rates.slam_hz = jnum(*r, "$.rates", "slam_hz", c.rates.slam_hz);
    c.rates.depth_hz = jnum(*r, "$.rates", "depth_hz", c.rates.depth_hz);
    c.rates.control_hz = jnum(*r, "$.rates", "control_hz", c.rates.control_hz);
  }

  const json* w = find_object(j, "$", "world");
  if (w == nullptr) {
    throw std::invalid_argument("config: missing required section $.world");
  }
  check_keys(*w, "$.world",
             {"seed", "side_m", "density_per_ha", "min_spacing_m", "radius_range",
              "height_range", "explicit_trees"});
  c.world.seed = juint(*w, "$.world", "seed", c.world.seed);
  c.world.side_m = jnum(*w, "$.world", "side_m", c.world.side_m);
  c.world.density_per_ha = jnum(*w, "$.world", "density_per_ha", c.world.density_per_ha);
  c.world.min_spacing_m = jnum(*w, "$.world", "min_spacing_m", c.world.min_spacing_m);
  if (w->contains("radius_range")) {
    const json& rr = (*w)["radius_range"];
    if (!rr.is_array() || rr.size() != 2) {
      throw std::invalid_argument("config: $.world.radius_range must be [min, max]");
    }
    c.world.radius_min_m = rr[0].get<double>();
    c.world.radius_max_m = rr[1].get<double>();
  }
  if (w->contains("height_range")) {
    const json& hr = (*w)["height_range"];
    if (!hr.is_array() || hr.size() != 2) {
      throw std::invalid_argument("config: $.world.height_range must be [min, max]");
    }
    c.world.height_min_m = hr[0].get<double>();
    c.world.height_max_m = hr[1].get<double>();
  }
  if (w->contains("explicit_trees")) {
    const json& trees = (*w)["explicit_trees"];
    if (!trees.is_array()) {
      throw std::invalid_argument("config: $.world.explicit_trees must be an array");
    }
    for (const json& t : trees) {
      Tree tree;
      tree.center = Vec3(t.at("x").get<double>(), t.at("y").get<double>(), 0.0);
      tree.radius = t.value("radius", tree.radius);
      tree.height = t.value("height", tree.height);
      c.world.explicit_trees.push_back(tree);
    }
  }

  if (const json* e = find_object(j, "$", "estimator")) {
    check_keys(*e, "$.estimator",
               {"seed", "drift_rate", "yaw_drift_rate_deg_per_m",
                "drift_persistence_m", "keyframe_translation_m",
                "keyframe_rotation_deg", "loop_closure_enabled", "loop_radius_m",
                "loop_min_keyframe_gap", "loop_cooldown_path_m"});
    c.estimator.seed = juint(*e, "$.estimator", "seed", c.estimator.seed);
    c.estimator.drift_rate = jnum(*e, "$.estimator", "drift_rate", c.estimator.drift_rate);
    c.estimator.yaw_drift_rate_deg_per_m =
        jnum(*e, "$.estimator", "yaw_drift_rate_deg_per_m", c.estimator.yaw_drift_rate_deg_per_m);
    c.estimator.drift_persistence_m =
        jnum(*e, "$.estimator", "drift_persistence_m", c.estimator.drift_persistence_m);
    c.estimator.keyframe_translation_m =
        jnum(*e, "$.estimator", "keyframe_translation_m", c.estimator.keyframe_translation_m);
    c.estimator.keyframe_rotation_deg =
        jnum(*e, "$.estimator", "keyframe_rotation_deg", c.estimator.keyframe_rotation_deg);
    c.estimator.loop_closure_enabled =
        jbool(*e, "$.estimator", "loop_closure_enabled", c.estimator.loop_closure_enabled);
    c.estimator.loop_radius_m = jnum(*e, "$.estimator", "loop_radius_m", c.estimator.loop_radius_m);
    c.estimator.loop_min_keyframe_gap =
        jint(*e, "$.estimator", "loop_min_keyframe_gap", c.estimator.loop_min_keyframe_gap);
    c.estimator.loop_cooldown_path_m =
        jnum(*e, "$.estimator", "loop_cooldown_path_m", c.estimator.loop_cooldown_path_m);
  }

  if (const json* m = find_object(j, "$", "mapping")) {
    check_keys(*m, "$.mapping",
               {"resolution_m", "root_side_m", "l_hit", "l_miss", "l_min", "l_max",
                "alpha", "beta", "keyframes_per_submap", "carve_invalid_range_m"});
    c.mapping.resolution_m = jnum(*m, "$.mapping", "resolution_m", c.mapping.resolution_m);
    c.mapping.root_side_m = jnum(*m, "$.mapping", "root_side_m", c.mapping.root_side_m);
    c.mapping.l_hit = jnum(*m, "$.mapping", "l_hit", c.mapping.l_hit);
    c.mapping.l_miss = jnum(*m, "$.mapping", "l_miss", c.mapping.l_miss);
    c.mapping.l_min = jnum(*m, "$.mapping", "l_min", c.mapping.l_min);
    c.mapping.l_max = jnum(*m, "$.mapping", "l_max", c.mapping.l_max);
    c.mapping.alpha = jnum(*m, "$.mapping", "alpha", c.mapping.alpha);
    c.mapping.beta = jnum(*m, "$.mapping", "beta", c.mapping.beta);
    c.mapping.keyframes_per_submap =
        jint(*m, "$.mapping", "keyframes_per_submap", c.mapping.keyframes_per_submap);
    c.mapping.carve_invalid_range_m =
        jnum(*m, "$.mapping", "carve_invalid_range_m", c.mapping.carve_invalid_range_m);
  }

  if (const json* p = find_object(j, "$", "planner")) {
    check_keys(*p, "$.planner",
               {"seed", "radius_m", "last_S", "alpha", "budget_s",
                "iterations_per_second", "max_iterations", "goal_bias", "max_edge_m",
                "stop_cost_ratio", "margin_xy_m", "margin_z_m", "min_z_m", "max_z_m"});
    c.planner.seed = static_cast<unsigned int>(juint(*p, "$.planner", "seed", c.planner.seed));
    c.planner.radius_m = jnum(*p, "$.planner", "radius_m", c.planner.radius_m);
    c.planner.last_S = jint(*p, "$.planner", "last_S", c.planner.last_S);
    c.planner.alpha = jnum(*p, "$.planner", "alpha", c.planner.alpha);
    c.planner.budget_s = jnum(*p, "$.planner", "budget_s", c.planner.budget_s);
    c.planner.iterations_per_second =
        jnum(*p, "$.planner", "iterations_per_second", c.planner.iterations_per_second);
    c.planner.max_iterations = jint(*p, "$.planner", "max_iterations", c.planner.max_iterations);
    c.planner.goal_bias = jnum(*p, "$.planner", "goal_bias", c.planner.goal_bias);
    c.planner.max_edge_m = jnum(*p, "$.planner", "max_edge_m", c.planner.max_edge_m);
    c.planner.stop_cost_ratio = jnum(*p, "$.planner", "stop_cost_ratio", c.planner.stop_cost_ratio);
    c.planner.margin_xy_m = jnum(*p, "$.planner", "margin_xy_m", c.planner.margin_xy_m);
    c.planner.margin_z_m = jnum(*p, "$.planner", "margin_z_m", c.planner.margin_z_m);
    c.planner.min_z_m = jnum(*p, "$.planner", "min_z_m", c.planner.min_z_m);
    c.planner.max_z_m = jnum(*p, "$.planner", "max_z_m", c.planner.max_z_m);
  }

  if (const json* k = find_object(j, "$", "controller")) {
    check_keys(*k, "$.controller", {"kp", "kd", "a_cmd_max", "yaw_gain", "yaw_rate_max"});
    c.controller.kp = jnum(*k, "$.controller", "kp", c.controller.kp);
    c.controller.kd = jnum(*k, "$.controller", "kd", c.controller.kd);
    c.controller.a_cmd_max = jnum(*k, "$.controller", "a_cmd_max", c.controller.a_cmd_max);
    c.controller.yaw_gain = jnum(*k, "$.controller", "yaw_gain", c.controller.yaw_gain);
    c.controller.yaw_rate_max = jnum(*k, "$.controller", "yaw_rate_max", c.controller.yaw_rate_max);
  }

  if (const json* d = find_object(j, "$", "depth")) {
    check_keys(*d, "$.depth", {"width", "height", "hfov_deg", "max_range_m", "noise_std_m"});
    c.depth.width = jint(*d, "$.depth", "width", c.depth.width);
    c.depth.height = jint(*d, "$.depth", "height", c.depth.height);
    c.depth.hfov_deg = jnum(*d, "$.depth", "hfov_deg", c.depth.hfov_deg);
    c.depth.max_range_m = jnum(*d, "$.depth", "max_range_m", c.depth.max_range_m);
    c.depth.noise_std_m = jnum(*d, "$.depth", "noise_std_m", c.depth.noise_std_m);
  }

  if (const json* f = find_object(j, "$", "flight")) {
    check_keys(*f, "$.flight",
               {"v_max", "a_max", "traj_dt", "mav_radius_m", "goal_tolerance_m",
                "max_mission_time_s", "anchors_per_reference", "fuse_ground_truth"});
    c.v_max = jnum(*f, "$.flight", "v_max", c.v_max);
    c.a_max = jnum(*f, "$.flight", "a_max", c.a_max);
    c.traj_dt = jnum(*f, "$.flight", "traj_dt", c.traj_dt);
    c.mav_radius_m = jnum(*f, "$.flight", "mav_radius_m", c.mav_radius_m);
    c.goal_tolerance_m = jnum(*f, "$.flight", "goal_tolerance_m", c.goal_tolerance_m);
    c.max_mission_time_s = jnum(*f, "$.flight", "max_mission_time_s", c.max_mission_time_s);
    c.anchors_per_reference = jint(*f, "$.flight", "anchors_per_reference", c.anchors_per_reference);
    c.fuse_ground_truth = jbool(*f, "$.flight", "fuse_ground_truth", c.fuse_ground_truth);
  }

  return c;
}

// --------------------------------------------------------------------------
// Mission patterns

std::vector<Vec3> generate_lawnmower(double extent_m, double row_spacing_m,
                                     double altitude_m) {
  if (!(extent_m > 0.0)) {
    throw std::invalid_argument("lawnmower: extent must be positive");
  }
  if (!(row_spacing_m > 0.0)) {
    throw std::invalid_argument("lawnmower: row spacing must be positive");
  }
  const int rows = static_cast<int>(std::floor(extent_m / row_spacing_m + 1e-9)) + 1;
  std::vector<Vec3> goals;
  goals.reserve(static_cast<size_t>(2 * rows));
  for (int i = 0; i < rows; ++i) {
    const double y = std::min(i * row_spacing_m, extent_m);
    if (i % 2 == 0) {
      goals.emplace_back(0.0, y, altitude_m);
      goals.emplace_back(extent_m, y, altitude_m);
    } else {
      goals.emplace_back(extent_m, y, altitude_m);
      goals.emplace_back(0.0, y, altitude_m);
    }
  }
  return goals;
}

std::vector<Vec3> generate_modified_lawnmower(double extent_m, double row_spacing_m,
                                              double altitude_m, int revisit_every) {
  if (revisit_every < 1) {
    throw std::invalid_argument("modified lawnmower: revisit_every must be >= 1");
  }
  const std::vector<Vec3> plain = generate_lawnmower(extent_m, row_spacing_m, altitude_m);
  const int rows = static_cast<int>(plain.size() / 2);
  std::vector<Vec3> goals;
  for (int i = 0; i < rows; ++i) {
    goals.push_back(plain[static_cast<size_t>(2 * i)]);
    goals.push_back(plain[static_cast<size_t>(2 * i + 1)]);
    // Detour: drop back to the previous row (whose start shares this row's
    // end x in the boustrophedon), then return and continue the pattern.
    if (i > 0 && (i + 1) % revisit_every == 0) {
      goals.push_back(plain[static_cast<size_t>(2 * (i - 1))]);
      goals.push_back(plain[static_cast<size_t>(2 * i + 1)]);
    }
  }
  return goals;
}

std::vector<Vec3> mission_goals(const MissionConfig& c) {
  if (c.pattern == MissionPattern::ExplicitGoals) return c.explicit_goals;
  std::vector<Vec3> goals =
      c.pattern == MissionPattern::Lawnmower
          ? generate_lawnmower(c.extent_m, c.row_spacing_m, c.altitude_m)
          : generate_modified_lawnmower(c.extent_m, c.row_spacing_m, c.altitude_m,
                                        c.revisit_every);
  double ox = c.pattern_origin_x;
  double oy = c.pattern_origin_y;
  if (ox < 0.0) ox = std::max(0.0, (c.world.side_m - c.extent_m) / 2.0);
  if (oy < 0.0) oy = std::max(0.0, (c.world.side_m - c.extent_m) / 2.0);
  for (Vec3& g : goals) {
    g.x() += ox;
    g.y() += oy;
  }
  return goals;
}

// --------------------------------------------------------------------------
// Mission runner

namespace {

void validate_config(const MissionConfig& c) {
  if (!(c.rates.slam_hz > 0.0) || !(c.rates.depth_hz > 0.0) || !(c.rates.control_hz > 0.0)) {
    throw std::invalid_argument("config: rates must be positive");
  }
  if (c.rates.control_hz < 40.0) {
    throw std::invalid_argument("config: control_hz must be at least 40");
  }
  if (!(c.v_max > 0.0) || !(c.a_max > 0.0) || !(c.traj_dt > 0.0)) {
    throw std::invalid_argument("config: v_max, a_max and traj_dt must be positive");
  }
  if (!(c.mav_radius_m > 0.0) || !(c.goal_tolerance_m > 0.0)) {
    throw std::invalid_argument("config: mav_radius_m and goal_tolerance_m must be positive");
  }
  if (!(c.max_mission_time_s > 0.0)) {
    throw std::invalid_argument("config: max_mission_time_s must be positive");
  }
  if (c.anchors_per_reference < 1) {
    throw std::invalid_argument("config: anchors_per_reference must be >= 1");
  }
  if (c.pattern == MissionPattern::ExplicitGoals && c.explicit_goals.size() < 2) {
    throw std::invalid_argument(
        "config: explicit_goals needs at least a start and one goal");
  }
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * M_PI); }

// Camera looks along body +x: optical z forward, optical x right (body -y),
// optical y down (body -z).
Pose body_to_camera() {
  Eigen::Matrix3d R;
  R.col(0) = Vec3(0, -1, 0);
  R.col(1) = Vec3(0, 0, -1);
  R.col(2) = Vec3(1, 0, 0);
  return Pose(Quat(R), Vec3::Zero());
}

struct TrueState {
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double yaw = 0.0;
  Pose pose() const { return Pose(quat_from_yaw(yaw), r); }
};

class MissionRunner {
 public:
  explicit MissionRunner(const MissionConfig& config)
      : cfg_(config),
        world_(ForestWorld::generate(config.world)),
        estimator_(config.estimator),
        collection_(config.mapping),
        controller_(config.controller),
        camera_(CameraIntrinsics::from_fov(config.depth.width, config.depth.height,
                                           config.depth.hfov_deg)),
        T_SC_(body_to_camera()),
        goals_(mission_goals(config)) {
    if (config.fuse_ground_truth) gt_collection_.emplace(config.mapping);
  }

  MissionLog run();

 private:
  EstimatorState propagate_estimate(double t) const;
  bool ball_free(const Vec3& p) const;
  struct Projection {
    Vec3 target = Vec3::Zero();
    bool projected = false;
    bool ok = false;
  };
  Projection project_goal(const Vec3& start, const Vec3& goal) const;
  bool attempt_plan(double t, const EstimatorState& est);
  bool trajectory_still_valid(double t) const;
  Vec3 pd_hold(const Vec3& hold_r, const EstimatorState& est) const;

  MissionConfig cfg_;
  ForestWorld world_;
  SimulatedEstimator estimator_;
  SubmapCollection collection_;
  std::optional<SubmapCollection> gt_collection_;  // ground-truth-pose fusion
  Controller controller_;
  CameraIntrinsics camera_;
  Pose T_SC_;
  std::vector<Vec3> goals_;

  MissionLog log_;
  TrueState true_;

  // 40 Hz estimate = last estimator output composed with the exact truth
  // delta since that output (stands in for IMU propagation between frames).
  EstimatorState est_base_;
  Pose true_base_;

  std::optional<AnchoredTrajectory> active_;
  int state_generation_ = 0;
  Vec3 interim_goal_ = Vec3::Zero();
  bool interim_is_final_ = false;
  size_t next_goal_ = 1;
  int plan_count_ = 0;
  int plan_failures_ = 0;  // consecutive failures toward the current goal
  uint64_t depth_count_ = 0;
  bool pending_corrections_ = false;
  bool planned_this_tick_ = false;

  bool scanning_ = false;
  Vec3 hold_r_ = Vec3::Zero();
};

EstimatorState MissionRunner::propagate_estimate(double t) const {
  const Pose delta = true_base_.inverse() * true_.pose();
  const Pose T = est_base_.T_WS() * delta;
  EstimatorState est = est_base_;
  est.timestamp = t;
  est.r_WS = T.r();
  est.q_WS = T.q();
  est.v_W = (est_base_.q_WS * true_base_.q().conjugate()) * true_.v;
  return est;
}

bool MissionRunner::ball_free(const Vec3& p) const {
  return is_segment_valid(p, p, cfg_.planner.radius_m, collection_,
                          cfg_.planner.last_S, cfg_.planner.alpha);
}

MissionRunner::Projection MissionRunner::project_goal(const Vec3& start,
                                                      const Vec3& goal) const {
  if (collection_.size() == 0) return {goal, false, false};
  if (ball_free(goal)) return {goal, false, true};
  const Vec3 d = goal - start;
  const double len = d.norm();
  if (len < kTimeEps) return {goal, false, false};
  constexpr double kStep = 0.5;
  for (double s = len - kStep; s >= 0.75; s -= kStep) {
    const Vec3 p = start + d * (s / len);
    if (ball_free(p)) return {p, true, true};
  }
  return {goal, false, false};
}

bool MissionRunner::attempt_plan(double t, const EstimatorState& est) {
  const Vec3 goal_w = goals_[next_goal_];
  const Projection proj = project_goal(est.r_WS, goal_w);
  if (!proj.ok) {
    ++plan_failures_;
    return false;
  }

  // A projection collapsing onto the current position cannot make progress.
  if (proj.projected && (proj.target - est.r_WS).norm() < cfg_.goal_tolerance_m) {
    ++plan_failures_;
    return false;
  }

  PlannerParams pp = cfg_.planner;
  pp.seed = cfg_.planner.seed + static_cast<unsigned int>(plan_count_);
  const PlanResult res = plan(est.r_WS, proj.target, collection_, pp);
  ++plan_count_;

  PlanEvent ev;
  ev.t = t;
  ev.goal_index = static_cast<int>(next_goal_);
  ev.start = est.r_WS;
  ev.goal = proj.target;
  ev.goal_projected = proj.projected;
  ev.success = res.path.has_value();
  ev.cost = res.cost;
  ev.iterations = res.iterations;
  log_.plans.push_back(ev);

  if (!res.path) {
    ++plan_failures_;
    return false;
  }
  plan_failures_ = 0;

  const ReferenceTrajectory traj =
      path_to_trajectory(*res.path, cfg_.v_max, cfg_.a_max, cfg_.traj_dt,
                         est.v_W.norm(), yaw_of(est.q_WS), t);
  active_ = bind_trajectory(traj, estimator_.keyframes(), cfg_.anchors_per_reference);
  state_generation_ = active_->generation;
  interim_goal_ = proj.target;
  interim_is_final_ = !proj.projected;
  scanning_ = false;
  planned_this_tick_ = true;
  return true;
}

bool MissionRunner::trajectory_still_valid(double t) const {
  const auto& refs = active_->traj.refs;
  auto it = std::upper_bound(refs.begin(), refs.end(), t,
                             [](double v, const Reference& r) { return v < r.t; });
  size_t i = it == refs.begin() ? 0 : static_cast<size_t>(it - refs.begin()) - 1;
  double covered = 0.0;
  Vec3 seg_start = refs[i].r;
  for (size_t k = i + 1; k < refs.size() && covered < kValidateHorizon; ++k) {
    const Vec3 seg_end = refs[k].r;
    if ((seg_end - seg_start).norm() < 0.4 && k + 1 < refs.size()) continue;
    if (!is_segment_valid(seg_start, seg_end, cfg_.planner.radius_m, collection_,
                          cfg_.planner.last_S, cfg_.planner.alpha)) {
      return false;
    }
    covered += (seg_end - seg_start).norm();
    seg_start = seg_end;
  }
  return true;
}

Vec3 MissionRunner::pd_hold(const Vec3& hold_r, const EstimatorState& est) const {
  Vec3 a = cfg_.controller.kp * (hold_r - est.r_WS) - cfg_.controller.kd * est.v_W;
  const double n = a.norm();
  if (n > cfg_.controller.a_cmd_max) a *= cfg_.controller.a_cmd_max / n;
  return a;
}

MissionLog MissionRunner::run() {
  log_.goals_total = static_cast<int>(goals_.size()) - 1;

  true_.r = goals_.front();
  if (goals_.size() > 1) {
    const Vec3 d = goals_[1] - goals_[0];
    true_.yaw = std::atan2(d.y(), d.x());
  }
  hold_r_ = true_.r;

  const double dt = 1.0 / cfg_.rates.control_hz;
  const double slam_period = 1.0 / cfg_.rates.slam_hz;
  const double depth_period = 1.0 / cfg_.rates.depth_hz;
  double next_slam = 0.0;
  double next_depth = 0.0;
  double next_validate = 0.0;
  double next_plan_allowed = 0.0;
  double last_slam_t = -slam_period;
  double last_active_t = 0.0;

  ControlCommand cmd;
  double t = 0.0;
  bool done = false;

  for (uint64_t tick = 0; !done; ++tick) {
    t = static_cast<double>(tick) * dt;
    planned_this_tick_ = false;

    if (t > cfg_.max_mission_time_s) {
      log_.abort_reason = "timeout";
      break;
    }

    // Truth: exact point-mass integration of the previous command.
    if (tick > 0) {
      true_.v += cmd.acceleration_W * dt;
      true_.r += true_.v * dt;
      true_.yaw = wrap_angle(true_.yaw + cmd.yaw_rate * dt);
      log_.distance_traveled_m += true_.v.norm() * dt;
    }

    // Collision oracle against the true world, every tick.
    const bool hit = world_.collides(true_.r, cfg_.mav_radius_m);
    if (hit) {
      log_.collided = true;
      log_.abort_reason = "collision";
    }

    // Estimator at slam rate: drift step, keyframes, submaps, loop closures.
    if (t + kTimeEps >= next_slam) {
      next_slam += slam_period;
      const StateUpdate upd = estimator_.step(true_.pose(), true_.v, t - last_slam_t);
      last_slam_t = t;
      est_base_ = upd.live_state;
      true_base_ = true_.pose();
      if (auto kf = estimator_.maybe_create_keyframe(est_base_)) {
        if (collection_.maybe_create_submap(*kf, cfg_.mapping.keyframes_per_submap)) {
          estimator_.set_submap_host(kf->id);
        }
        if (gt_collection_) {
          Keyframe gt_kf = *kf;
          gt_kf.T_WS = true_.pose();  // host at the true pose; never corrected
          gt_collection_->maybe_create_submap(gt_kf, cfg_.mapping.keyframes_per_submap);
        }
      }
      if (auto closure = estimator_.detect_and_close_loop(true_.pose())) {
        ++log_.loop_closures;
        log_.closure_ticks.push_back(static_cast<int>(log_.ticks.size()));
        est_base_ = closure->live_state;
        true_base_ = true_.pose();
        for (const auto& [id, pose] : closure->corrected_keyframes) {
          collection_.update_keyframe_pose(id, pose);
        }
        pending_corrections_ = true;
      }
    }

    EstimatorState est = propagate_estimate(t);

    // Depth synthesis from the true pose, fusion at the estimated pose.
    if (t + kTimeEps >= next_depth) {
      next_depth += depth_period;
      if (collection_.size() > 0) {
        const Pose T_WC_true = true_.pose() * T_SC_;
        DepthImage img =
            raycast_depth(world_, T_WC_true, camera_, cfg_.depth.max_range_m,
                          cfg_.depth.noise_std_m, cfg_.seed + 7919 * depth_count_);
        img.timestamp = t;
        collection_.integrate_depth(est.T_WS() * T_SC_, img);
        // The vehicle's own collision-free volume is invisible to the
        // camera (it sits in the blind cone above/below the optical axis),
        // so inject it as free evidence or takeoff could never validate.
        collection_.clear_sphere(est.r_WS, cfg_.planner.radius_m + 0.2);
        if (gt_collection_ && gt_collection_->size() > 0) {
          gt_collection_->integrate_depth(T_WC_true, img);
          gt_collection_->clear_sphere(true_.r, cfg_.planner.radius_m + 0.2);
        }
        ++depth_count_;
      }
    }

    // Goal bookkeeping and planning.
    const bool aborting = log_.collided || !log_.abort_reason.empty();
    if (!aborting) {
      if (active_ && (est.r_WS - interim_goal_).norm() < cfg_.goal_tolerance_m) {
        if (interim_is_final_) {
          ++log_.goals_reached;
          ++next_goal_;
          plan_failures_ = 0;
          if (next_goal_ >= goals_.size()) {
            log_.completed = true;
            done = true;
          }
        }
        active_.reset();
        hold_r_ = est.r_WS;
        next_plan_allowed = t;
      }
      if (!done && active_ && t > active_->traj.refs.back().t + kTrajEndGrace) {
        active_.reset();  // parked at the end without reaching the goal
        hold_r_ = est.r_WS;
        next_plan_allowed = t;
      }
      if (!done && active_ && t + kTimeEps >= next_validate) {
        next_validate = t + kValidatePeriod;
        if (!trajectory_still_valid(t)) {
          active_.reset();
          hold_r_ = est.r_WS;
          next_plan_allowed = t;
        }
      }
      if (!done && !active_ && t + kTimeEps >= next_plan_allowed) {
        next_plan_allowed = t + kPlanRetryPeriod;
        if (!attempt_plan(t, est) && !scanning_) {
          scanning_ = true;
          hold_r_ = est.r_WS;
        }
      }
      if (!done && !active_ && plan_failures_ > kGoalSkipFailures &&
          next_goal_ + 1 < goals_.size()) {
        ++next_goal_;  // skip an unreachable goal and move on
        plan_failures_ = 0;
      }
      if (active_) last_active_t = t;
      if (!done && !active_ && t - last_active_t > kPlannerStallAbort) {
        log_.planner_aborted = true;
        log_.abort_reason = "planner stalled";
      }
    }

    // Anchoring: fan pending corrections out to the active trajectory.
    if (pending_corrections_) {
      pending_corrections_ = false;
      if (active_ && !planned_this_tick_) {
        std::unordered_map<int, Pose> poses;
        for (const Keyframe& kf : estimator_.keyframes()) poses[kf.id] = kf.T_WS;
        AnchoredTrajectory deformed = deform(*active_, poses);
        DeformationEvent ev;
        ev.t = t;
        ev.generation = deformed.generation;
        for (size_t i = 0; i < deformed.traj.refs.size(); ++i) {
          const double d = (deformed.traj.refs[i].r - active_->traj.refs[i].r).norm();
          ev.max_displacement_m = std::max(ev.max_displacement_m, d);
        }
        ev.end_displacement_m =
            (deformed.traj.refs.back().r - active_->traj.refs.back().r).norm();
        ev.corrected_keyframes = static_cast<int>(poses.size());
        log_.deformations.push_back(ev);
        active_ = std::move(deformed);
        state_generation_ = active_->generation;
      }
    }

    // Controller (or hover/scan fallback when no trajectory is active).
    TickRecord rec;
    if (!aborting && active_) {
      const SyncInput in{est, &*active_, state_generation_};
      cmd = controller_.update(in, t);
      rec.ref_r = interpolate_reference(active_->traj, t).r;
      rec.generation = state_generation_;
    } else {
      cmd.acceleration_W = pd_hold(hold_r_, est);
      cmd.yaw_rate = (!aborting && scanning_) ? kScanYawRate : 0.0;
      cmd.timestamp = t;
      rec.ref_r = hold_r_;
      rec.generation = -1;
    }

    rec.t = t;
    rec.true_r = true_.r;
    rec.true_yaw = true_.yaw;
    rec.true_v = true_.v;
    rec.est_r = est.r_WS;
    rec.est_yaw = yaw_of(est.q_WS);
    rec.est_v = est.v_W;
    rec.cmd_a = cmd.acceleration_W;
    rec.cmd_yaw_rate = cmd.yaw_rate;
    rec.collision = hit;
    log_.ticks.push_back(rec);

    if (log_.collided || log_.planner_aborted) break;
  }

  log_.final_time_s = t;
  log_.submaps.emplace(std::move(collection_));
  if (gt_collection_) log_.gt_submaps.emplace(std::move(*gt_collection_));
  return log_;
}

}  // namespace

MissionLog run_mission(const MissionConfig& config) {
  validate_config(config);
  MissionRunner runner(config);
  return runner.run();
}

// --------------------------------------------------------------------------
// Artifact export

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << content;
}

}  // namespace

void write_mission_log(const MissionLog& log, const MissionConfig& config,
                       const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root);

  write_file(root / "config.json", mission_config_to_json(config).dump(2) + "\n");

  std::string ticks =
      "t,true_x,true_y,true_z,true_yaw,true_vx,true_vy,true_vz,"
      "est_x,est_y,est_z,est_yaw,est_vx,est_vy,est_vz,"
      "cmd_ax,cmd_ay,cmd_az,cmd_yaw_rate,ref_x,ref_y,ref_z,generation,collision\n";
  char buf[512];
  for (const TickRecord& r : log.ticks) {
    std::snprintf(buf, sizeof(buf),
                  "%.6f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,"
                  "%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,"
                  "%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%d,%d\n",
                  r.t, r.true_r.x(), r.true_r.y(), r.true_r.z(), r.true_yaw,
                  r.true_v.x(), r.true_v.y(), r.true_v.z(), r.est_r.x(), r.est_r.y(),
                  r.est_r.z(), r.est_yaw, r.est_v.x(), r.est_v.y(), r.est_v.z(),
                  r.cmd_a.x(), r.cmd_a.y(), r.cmd_a.z(), r.cmd_yaw_rate, r.ref_r.x(),
                  r.ref_r.y(), r.ref_r.z(), r.generation, r.collision ? 1 : 0);
    ticks += buf;
  }
  write_file(root / "ticks.csv", ticks);

  std::string plans = "t,goal_index,start_x,start_y,start_z,goal_x,goal_y,goal_z,"
                      "projected,success,cost,iterations\n";
  for (const PlanEvent& p : log.plans) {
    std::snprintf(buf, sizeof(buf),
                  "%.6f,%d,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%d,%d,%.9f,%d\n", p.t,
                  p.goal_index, p.start.x(), p.start.y(), p.start.z(), p.goal.x(),
                  p.goal.y(), p.goal.z(), p.goal_projected ? 1 : 0,
                  p.success ? 1 : 0, p.cost, p.iterations);
    plans += buf;
  }
  write_file(root / "plans.csv", plans);

  std::string deforms =
      "t,generation,max_displacement_m,end_displacement_m,corrected_keyframes\n";
  for (const DeformationEvent& d : log.deformations) {
    std::snprintf(buf, sizeof(buf), "%.6f,%d,%.9f,%.9f,%d\n", d.t, d.generation,
                  d.max_displacement_m, d.end_displacement_m, d.corrected_keyframes);
    deforms += buf;
  }
  write_file(root / "deformations.csv", deforms);

  json summary;
  summary["completed"] = log.completed;
  summary["collided"] = log.collided;
  summary["planner_aborted"] = log.planner_aborted;
  summary["abort_reason"] = log.abort_reason;
  summary["goals_reached"] = log.goals_reached;
  summary["goals_total"] = log.goals_total;
  summary["loop_closures"] = log.loop_closures;
  summary["closure_ticks"] = log.closure_ticks;
  summary["deformation_events"] = log.deformations.size();
  summary["plan_events"] = log.plans.size();
  summary["distance_traveled_m"] = log.distance_traveled_m;
  summary["final_time_s"] = log.final_time_s;
  summary["ticks"] = log.ticks.size();
  summary["submaps"] = log.submaps ? log.submaps->size() : 0;
  write_file(root / "summary.json", summary.dump(2) + "\n");

  if (log.submaps) {
    log.submaps->extract_mesh().save_ply((root / "reconstruction.ply").string());
  }
}

MissionLog read_mission_log(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);

  std::ifstream in(root / "ticks.csv");
  if (!in) {
    throw std::runtime_error("cannot open " + (root / "ticks.csv").string());
  }
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,true_x", 0) != 0) {
    throw std::runtime_error("ticks.csv: unexpected header");
  }
  MissionLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double f[24];
    const char* p = line.c_str();
    for (int i = 0; i < 24; ++i) {
      char* end = nullptr;
      f[i] = std::strtod(p, &end);
      if (end == p || (i + 1 < 24 && *end != ',')) {
        throw std::runtime_error("ticks.csv: malformed row");
      }
      p = end + (i + 1 < 24 ? 1 : 0);
    }
    TickRecord r;
    r.t = f[0];
    r.true_r = Vec3(f[1], f[2], f[3]);
    r.true_yaw = f[4];
    r.true_v = Vec3(f[5], f[6], f[7]);
    r.est_r = Vec3(f[8], f[9], f[10]);
    r.est_yaw = f[11];
    r.est_v = Vec3(f[12], f[13], f[14]);
    r.cmd_a = Vec3(f[15], f[16], f[17]);
    r.cmd_yaw_rate = f[18];
    r.ref_r = Vec3(f[19], f[20], f[21]);
    r.generation = static_cast<int>(f[22]);
    r.collision = f[23] != 0.0;
    log.ticks.push_back(r);
  }

  std::ifstream sin(root / "summary.json");
  if (!sin) {
    throw std::runtime_error("cannot open " + (root / "summary.json").string());
  }
  json s;
  try {
    s = json::parse(sin);
  } catch (const json::exception& e) {
    throw std::runtime_error("summary.json: " + std::string(e.what()));
  }
  log.completed = s.value("completed", false);
  log.collided = s.value("collided", false);
  log.planner_aborted = s.value("planner_aborted", false);
  log.abort_reason = s.value("abort_reason", std::string());
  log.goals_reached = s.value("goals_reached", 0);
  log.goals_total = s.value("goals_total", 0);
  log.loop_closures = s.value("loop_closures", 0);
  log.closure_ticks = s.value("closure_ticks", std::vector<int>());
  log.distance_traveled_m = s.value("distance_traveled_m", 0.0);
  log.final_time_s = s.value("final_time_s", 0.0);
  return log;
}

}  // namespace forestnav
