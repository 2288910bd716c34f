#ifndef FORESTNAV_ESTIMATOR_HPP
#define FORESTNAV_ESTIMATOR_HPP

#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "forestnav/geometry.hpp"

namespace forestnav {

struct EstimatorConfig {
  uint64_t seed = 1;

  // Position drift as a fraction of distance traveled; the walk direction is
  // persistent with the correlation length below, which keeps the calibration
  // "error roughly proportional to distance" valid over mission-scale paths.
  double drift_rate = 0.005;
  double yaw_drift_rate_deg_per_m = 0.005;  // 0.5 deg per 100 m
  double drift_persistence_m = 200.0;

  // Keyframe creation thresholds, measured in the estimate frame.
  double keyframe_translation_m = 1.0;
  double keyframe_rotation_deg = 15.0;

  bool loop_closure_enabled = true;
  double loop_radius_m = 3.0;       // revisit radius around a keyframe
  int loop_min_keyframe_gap = 50;   // candidate must be this many keyframes old
  double loop_cooldown_path_m = 8.0;
};

struct EstimatorState {
  double timestamp = 0.0;
  Vec3 r_WS = Vec3::Zero();
  Quat q_WS = Quat::Identity();
  Vec3 v_W = Vec3::Zero();
  Vec3 b_g = Vec3::Zero();  // constant in this stand-in
  Vec3 b_a = Vec3::Zero();

  Pose T_WS() const { return Pose(q_WS, r_WS); }
};

struct Keyframe {
  int id = 0;
  double timestamp = 0.0;
  Pose T_WS;  // current estimate; mutated retroactively by loop closures
  bool is_submap_host = false;
};

struct StateUpdate {
  EstimatorState live_state;
  std::vector<std::pair<int, Pose>> corrected_keyframes;
  bool is_loop_closure = false;
};

/// Drifting stand-in for a visual-inertial SLAM estimator. Live estimates
/// accumulate a seeded random-walk error proportional to distance traveled
/// (position and yaw only; roll and pitch are gravity-observable). Revisiting
/// an old keyframe triggers a loop closure that pulls the live estimate onto
/// the old keyframe's frame and distributes the correction over intermediate
/// keyframes proportionally to path distance.
class SimulatedEstimator {
 public:
  explicit SimulatedEstimator(const EstimatorConfig& config);

  /// Advances time by dt (> 0, or std::invalid_argument) and emits the live
  /// estimate for the given true state. Drift evolves with distance traveled.
  StateUpdate step(const Pose& true_pose, const Vec3& true_velocity, double dt);

  /// Creates a keyframe when the estimate has moved beyond the translation or
  /// rotation threshold since the last one (the first call always creates).
  /// `state` must be the most recent live state emitted by step().
  std::optional<Keyframe> maybe_create_keyframe(const EstimatorState& state);

  /// Fires when the true pose re-enters loop_radius_m of the oldest eligible
  /// keyframe (at least loop_min_keyframe_gap ids older than the newest) and
  /// the cooldown has elapsed. The returned update carries the corrected live
  /// state and every retroactively moved keyframe pose.
  std::optional<StateUpdate> detect_and_close_loop(const Pose& true_pose);

  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  const Keyframe& keyframe(int id) const { return keyframes_.at(static_cast<size_t>(id)); }
  void set_submap_host(int id) { keyframes_.at(static_cast<size_t>(id)).is_submap_host = true; }

  uint64_t corrections() const { return corrections_; }
  double path_distance() const { return path_; }
  const EstimatorState& latest() const { return latest_; }

 private:
  void advance_drift(double ds);

  EstimatorConfig config_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};

  // Drift state: estimate = drift applied to truth.
  Vec3 drift_r_ = Vec3::Zero();
  double drift_yaw_ = 0.0;
  Vec3 walk_dir_ = Vec3::UnitX();  // persistent direction of the position walk
  double yaw_dir_ = 1.0;           // telegraph sign of the yaw walk

  double time_ = 0.0;
  double path_ = 0.0;
  bool has_last_ = false;
  Pose last_true_pose_;
  Vec3 last_true_velocity_ = Vec3::Zero();
  EstimatorState latest_;

  std::vector<Keyframe> keyframes_;
  std::vector<Pose> keyframe_true_;   // true pose at creation (place recognition oracle)
  std::vector<double> keyframe_path_;

  double last_closure_path_ = -1e18;
  uint64_t corrections_ = 0;
};

}  // namespace forestnav

#endif  // FORESTNAV_ESTIMATOR_HPP
