#pragma once

#include <forestnav/anchoring.hpp>
#include <forestnav/estimator.hpp>

namespace forestnav {

struct ControllerParams {
  double kp = 4.0;           // position gain (1/s^2)
  double kd = 3.0;           // velocity gain (1/s)
  double a_cmd_max = 6.0;    // acceleration command norm limit (m/s^2)
  double yaw_gain = 1.5;     // yaw-rate per radian of yaw error (1/s)
  double yaw_rate_max = 1.5; // rad/s
};

struct ControlCommand {
  Vec3 acceleration_W = Vec3::Zero();  // saturated to a_cmd_max
  double yaw_rate = 0.0;
  double timestamp = 0.0;
};

/// A state/trajectory pair delivered atomically. After a deformation the
/// controller must never act on a state paired with an older (or newer)
/// trajectory, so the pairing is asserted through the generation counter.
struct SyncInput {
  EstimatorState state;
  const AnchoredTrajectory* trajectory = nullptr;
  int state_generation = 0;
};

/// Reference interpolated at t: linear in position and velocity, slerp in
/// orientation; the nearest endpoint is held outside the time span.
/// Throws std::invalid_argument on an empty trajectory.
Reference interpolate_reference(const ReferenceTrajectory& traj, double t);

/// Point-mass tracking law: PD + feedforward on the double integrator,
///   a = a_ff + kp (r_ref - r) + kd (v_ref - v),
/// with the reference interpolated at the query time. Before the first
/// reference or past the last one the nearest endpoint is held, which past
/// the end amounts to hovering since trajectories terminate at zero
/// velocity. Stateless: the same input always yields the same command.
class Controller {
 public:
  explicit Controller(ControllerParams params = ControllerParams{});

  /// Throws std::invalid_argument on a null/empty trajectory, a generation
  /// mismatch between state and trajectory, or non-finite input.
  ControlCommand update(const SyncInput& input, double t_now) const;

  const ControllerParams& params() const { return params_; }

 private:
  ControllerParams params_;
};

}  // namespace forestnav
