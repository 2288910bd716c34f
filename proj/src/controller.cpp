#include <forestnav/controller.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace forestnav {

namespace {

struct RefSample {
  Vec3 r = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 a_ff = Vec3::Zero();
};

RefSample sample_reference(const ReferenceTrajectory& traj, double t) {
  const auto& refs = traj.refs;
  if (t <= refs.front().t) {
    return {refs.front().r, refs.front().q, refs.front().v, Vec3::Zero()};
  }
  if (t >= refs.back().t) {
    return {refs.back().r, refs.back().q, refs.back().v, Vec3::Zero()};
  }
  const auto it = std::upper_bound(
      refs.begin(), refs.end(), t,
      [](double value, const Reference& ref) { return value < ref.t; });
  const Reference& b = *it;
  const Reference& a = *(it - 1);
  const double span = b.t - a.t;
  if (span <= 0.0) {
    return {b.r, b.q, b.v, Vec3::Zero()};
  }
  const double s = (t - a.t) / span;
  RefSample out;
  out.r = (1.0 - s) * a.r + s * b.r;
  out.v = (1.0 - s) * a.v + s * b.v;
  out.q = a.q.slerp(s, b.q);
  out.a_ff = (b.v - a.v) / span;  // piecewise-constant over the segment
  return out;
}

}  // namespace

Reference interpolate_reference(const ReferenceTrajectory& traj, double t) {
  if (traj.empty()) {
    throw std::invalid_argument("interpolate_reference: trajectory is empty");
  }
  const RefSample s = sample_reference(traj, t);
  Reference ref;
  ref.r = s.r;
  ref.q = s.q;
  ref.v = s.v;
  ref.t = t;
  return ref;
}

Controller::Controller(ControllerParams params) : params_(params) {
  if (!(params_.kp >= 0.0) || !(params_.kd >= 0.0)) {
    throw std::invalid_argument("controller: gains must be non-negative");
  }
  if (!(params_.a_cmd_max > 0.0)) {
    throw std::invalid_argument("controller: a_cmd_max must be positive");
  }
  if (!(params_.yaw_gain >= 0.0) || !(params_.yaw_rate_max >= 0.0)) {
    throw std::invalid_argument("controller: yaw parameters must be non-negative");
  }
}

ControlCommand Controller::update(const SyncInput& input, double t_now) const {
  if (input.trajectory == nullptr) {
    throw std::invalid_argument("controller: trajectory is null");
  }
  if (input.trajectory->traj.empty()) {
    throw std::invalid_argument("controller: trajectory is empty");
  }
  if (input.state_generation != input.trajectory->generation) {
    throw std::invalid_argument(
        "controller: state generation " + std::to_string(input.state_generation) +
        " does not match trajectory generation " +
        std::to_string(input.trajectory->generation));
  }
  if (!input.state.r_WS.allFinite() || !input.state.v_W.allFinite() ||
      !std::isfinite(t_now)) {
    throw std::invalid_argument("controller: non-finite input");
  }

  const RefSample ref = sample_reference(input.trajectory->traj, t_now);

  Vec3 a = ref.a_ff + params_.kp * (ref.r - input.state.r_WS) +
           params_.kd * (ref.v - input.state.v_W);
  const double norm = a.norm();
  if (norm > params_.a_cmd_max) {
    a *= params_.a_cmd_max / norm;
  }

  const double yaw_err =
      std::remainder(yaw_of(ref.q) - yaw_of(input.state.q_WS), 2.0 * M_PI);
  const double yaw_rate = std::clamp(params_.yaw_gain * yaw_err,
                                     -params_.yaw_rate_max, params_.yaw_rate_max);

  ControlCommand cmd;
  cmd.acceleration_W = a;
  cmd.yaw_rate = yaw_rate;
  cmd.timestamp = t_now;
  return cmd;
}

}  // namespace forestnav
