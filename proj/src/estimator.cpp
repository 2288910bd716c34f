#include "forestnav/estimator.hpp"

#include <cmath>
#include <stdexcept>

namespace forestnav {

namespace {
constexpr double kDegToRad = M_PI / 180.0;
// Offset that keeps a closure update's timestamp strictly after the step that
// triggered it while staying far below the control period.
constexpr double kClosureTimeOffset = 1e-6;
}  // namespace

SimulatedEstimator::SimulatedEstimator(const EstimatorConfig& config)
    : config_(config), rng_(config.seed) {
  // Initial walk directions are part of the seeded state.
  Vec3 dir(normal_(rng_), normal_(rng_), normal_(rng_));
  if (dir.norm() < 1e-12) dir = Vec3::UnitX();
  walk_dir_ = dir.normalized();
  yaw_dir_ = uniform_(rng_) < 0.5 ? -1.0 : 1.0;
}

void SimulatedEstimator::advance_drift(double ds) {
  if (ds <= 0.0) return;
  if (config_.drift_rate > 0.0) {
    // Rotate the walk direction by a small random angle about an axis
    // perpendicular to it; the persistence length sets the decorrelation
    // distance, which makes the accumulated drift scale ~linearly with
    // distance up to that scale.
    const double sigma = std::sqrt(2.0 * ds / config_.drift_persistence_m);
    const double angle = sigma * normal_(rng_);
    Vec3 axis(normal_(rng_), normal_(rng_), normal_(rng_));
    axis -= axis.dot(walk_dir_) * walk_dir_;
    if (axis.norm() > 1e-12) {
      walk_dir_ = Eigen::AngleAxisd(angle, axis.normalized()) * walk_dir_;
      walk_dir_.normalize();
    }
    drift_r_ += config_.drift_rate * ds * walk_dir_;
  }
  if (config_.yaw_drift_rate_deg_per_m > 0.0) {
    if (uniform_(rng_) < ds / (2.0 * config_.drift_persistence_m)) yaw_dir_ = -yaw_dir_;
    drift_yaw_ += config_.yaw_drift_rate_deg_per_m * kDegToRad * ds * yaw_dir_;
  }
}

StateUpdate SimulatedEstimator::step(const Pose& true_pose, const Vec3& true_velocity,
                                     double dt) {
  if (dt <= 0.0) {
    throw std::invalid_argument("SimulatedEstimator::step: dt must be positive");
  }
  double ds = 0.0;
  if (has_last_) ds = (true_pose.r() - last_true_pose_.r()).norm();
  advance_drift(ds);
  path_ += ds;
  time_ += dt;

  EstimatorState s;
  s.timestamp = time_;
  s.r_WS = true_pose.r() + drift_r_;
  if (drift_yaw_ != 0.0) {
    const Quat dq = quat_from_yaw(drift_yaw_);
    s.q_WS = (dq * true_pose.q()).normalized();
    s.v_W = dq * true_velocity;
  } else {
    s.q_WS = true_pose.q();
    s.v_W = true_velocity;
  }

  has_last_ = true;
  last_true_pose_ = true_pose;
  last_true_velocity_ = true_velocity;
  latest_ = s;

  StateUpdate update;
  update.live_state = s;
  return update;
}

std::optional<Keyframe> SimulatedEstimator::maybe_create_keyframe(const EstimatorState& state) {
  bool create = keyframes_.empty();
  if (!create) {
    const Keyframe& last = keyframes_.back();
    const double translation = (state.r_WS - last.T_WS.r()).norm();
    const double rotation = angular_distance(state.q_WS, last.T_WS.q());
    create = translation > config_.keyframe_translation_m ||
             rotation > config_.keyframe_rotation_deg * kDegToRad;
  }
  if (!create) return std::nullopt;

  Keyframe kf;
  kf.id = static_cast<int>(keyframes_.size());
  kf.timestamp = state.timestamp;
  kf.T_WS = state.T_WS();
  keyframes_.push_back(kf);
  keyframe_true_.push_back(last_true_pose_);
  keyframe_path_.push_back(path_);
  return kf;
}

std::optional<StateUpdate> SimulatedEstimator::detect_and_close_loop(const Pose& true_pose) {
  if (!config_.loop_closure_enabled || !has_last_) return std::nullopt;
  if (path_ - last_closure_path_ < config_.loop_cooldown_path_m) return std::nullopt;
  const int latest_id = static_cast<int>(keyframes_.size()) - 1;
  const int max_eligible = latest_id - config_.loop_min_keyframe_gap;
  if (max_eligible < 0) return std::nullopt;

  int loop_id = -1;
  for (int id = 0; id <= max_eligible; ++id) {
    if ((keyframe_true_[static_cast<size_t>(id)].r() - true_pose.r()).norm() <
        config_.loop_radius_m) {
      loop_id = id;
      break;  // oldest match wins
    }
  }
  if (loop_id < 0) return std::nullopt;

  // A loop closure observes the true relative pose between the old keyframe
  // and the current frame; the corrected live estimate re-expresses that
  // measurement in the old keyframe's (drift-frozen) estimated frame.
  const Keyframe& loop_kf = keyframes_[static_cast<size_t>(loop_id)];
  const Pose T_rel_true =
      keyframe_true_[static_cast<size_t>(loop_id)].inverse() * true_pose;
  const Pose est_desired = loop_kf.T_WS * T_rel_true;
  const Pose est_now = latest_.T_WS();
  const Pose delta_end = est_desired * est_now.inverse();

  // Distribute the terminal correction over keyframes after the loop
  // keyframe, proportionally to path distance, rotating about the loop
  // keyframe position so the correction grows smoothly from zero there.
  const Vec3 pivot = loop_kf.T_WS.r();
  const Pose to_pivot = Pose::Translation(pivot);
  const Pose delta_at_pivot = to_pivot.inverse() * delta_end * to_pivot;
  const double path_at_loop = keyframe_path_[static_cast<size_t>(loop_id)];
  const double denom = path_ - path_at_loop;

  StateUpdate update;
  update.is_loop_closure = true;
  for (int id = loop_id + 1; id <= latest_id; ++id) {
    double lambda = 1.0;
    if (denom > 1e-9) {
      lambda = (keyframe_path_[static_cast<size_t>(id)] - path_at_loop) / denom;
      lambda = std::clamp(lambda, 0.0, 1.0);
    }
    const Pose correction =
        to_pivot * interpolate_from_identity(delta_at_pivot, lambda) * to_pivot.inverse();
    Keyframe& kf = keyframes_[static_cast<size_t>(id)];
    kf.T_WS = correction * kf.T_WS;
    update.corrected_keyframes.emplace_back(id, kf.T_WS);
  }

  // Snap the live estimate and reset the drift so it continues from the
  // corrected frame.
  EstimatorState s = latest_;
  s.timestamp = latest_.timestamp + kClosureTimeOffset;
  const Pose corrected = delta_end * est_now;
  s.r_WS = corrected.r();
  s.q_WS = corrected.q();
  drift_r_ = corrected.r() - true_pose.r();
  drift_yaw_ = yaw_of(corrected.q() * true_pose.q().inverse());
  if (drift_yaw_ != 0.0) {
    s.v_W = quat_from_yaw(drift_yaw_) * last_true_velocity_;
  } else {
    s.v_W = last_true_velocity_;
  }
  latest_ = s;
  update.live_state = s;

  last_closure_path_ = path_;
  ++corrections_;
  return update;
}

}  // namespace forestnav
