#ifndef FORESTNAV_ANCHORING_HPP
#define FORESTNAV_ANCHORING_HPP

#include <unordered_map>
#include <vector>

#include "forestnav/estimator.hpp"
#include "forestnav/geometry.hpp"
#include "forestnav/planner.hpp"

namespace forestnav {

struct Anchor {
  int keyframe_id;
  Pose T_SsSj;    // reference pose expressed in the anchor keyframe, frozen at bind time
  double weight;  // positive; weights of one binding sum to 1
};

struct AnchorBinding {
  std::vector<Anchor> anchors;
};

/// A reference trajectory tied to its anchor keyframes. Deformations replace
/// poses/velocities in place, keep timestamps and bindings, and bump the
/// generation counter so consumers can detect the swap.
struct AnchoredTrajectory {
  ReferenceTrajectory traj;
  std::vector<AnchorBinding> bindings;  // one per reference
  int generation = 0;
};

/// Binds every reference to its K nearest keyframes (fewer if fewer exist)
/// by reference-to-keyframe distance. Weights are inverse-distance,
/// normalized over the selected anchors; a reference coinciding with a
/// keyframe puts all weight on it. Throws std::invalid_argument when no
/// keyframe exists or K < 1.
AnchoredTrajectory bind_trajectory(const ReferenceTrajectory& traj,
                        const std::vector<Keyframe>& keyframes, int K = 4);

/// Recomputes every reference against updated keyframe poses: positions are
/// the weighted sum of each anchor's stored relative position pushed through
/// its new pose, orientations the weighted quaternion average of the
/// composed rotations, and velocities are rotated by each reference's
/// orientation change. Timestamps, bindings, and weights are unchanged;
/// generation increments. Throws std::invalid_argument when a bound anchor
/// id is missing from the map.
AnchoredTrajectory deform(const AnchoredTrajectory& anchored,
                          const std::unordered_map<int, Pose>& keyframe_poses);

}  // namespace forestnav

#endif  // FORESTNAV_ANCHORING_HPP
