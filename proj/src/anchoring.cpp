#include "forestnav/anchoring.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace forestnav {

namespace {
constexpr double kZeroDistance = 1e-12;
}

AnchoredTrajectory bind_trajectory(const ReferenceTrajectory& traj,
                        const std::vector<Keyframe>& keyframes, int K) {
  if (keyframes.empty() || K < 1) {
    throw std::invalid_argument("bind: need at least one keyframe and K >= 1");
  }
  AnchoredTrajectory out;
  out.traj = traj;
  out.bindings.reserve(traj.refs.size());

  for (const Reference& ref : traj.refs) {
    std::vector<std::pair<double, size_t>> by_distance;
    by_distance.reserve(keyframes.size());
    for (size_t i = 0; i < keyframes.size(); ++i) {
      by_distance.emplace_back((ref.r - keyframes[i].T_WS.r()).norm(), i);
    }
    const size_t k = std::min<size_t>(static_cast<size_t>(K), keyframes.size());
    std::partial_sort(by_distance.begin(), by_distance.begin() + k, by_distance.end(),
                      [&](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first < b.first;
                        return keyframes[a.second].id < keyframes[b.second].id;
                      });

    AnchorBinding binding;
    binding.anchors.reserve(k);
    const Pose T_WSj(ref.q, ref.r);
    const bool coincident = by_distance[0].first < kZeroDistance;
    double inv_sum = 0.0;
    if (!coincident) {
      for (size_t i = 0; i < k; ++i) inv_sum += 1.0 / by_distance[i].first;
    }
    for (size_t i = 0; i < k; ++i) {
      const Keyframe& kf = keyframes[by_distance[i].second];
      double w;
      if (coincident) {
        w = i == 0 ? 1.0 : 0.0;  // limit of inverse-distance weighting
      } else {
        w = (1.0 / by_distance[i].first) / inv_sum;
      }
      binding.anchors.push_back({kf.id, kf.T_WS.inverse() * T_WSj, w});
    }
    out.bindings.push_back(std::move(binding));
  }
  return out;
}

AnchoredTrajectory deform(const AnchoredTrajectory& anchored,
                          const std::unordered_map<int, Pose>& keyframe_poses) {
  AnchoredTrajectory out = anchored;
  out.generation = anchored.generation + 1;

  std::vector<Quat> rotations;
  std::vector<double> weights;
  for (size_t j = 0; j < out.traj.refs.size(); ++j) {
    const AnchorBinding& binding = out.bindings[j];
    Reference& ref = out.traj.refs[j];

    Vec3 r_new = Vec3::Zero();
    rotations.clear();
    weights.clear();
    for (const Anchor& anchor : binding.anchors) {
      const auto it = keyframe_poses.find(anchor.keyframe_id);
      if (it == keyframe_poses.end()) {
        throw std::invalid_argument("deform: missing pose for anchor keyframe " +
                                    std::to_string(anchor.keyframe_id));
      }
      const Pose& T_WSs = it->second;
      r_new += anchor.weight * (T_WSs * anchor.T_SsSj.r());
      rotations.push_back(T_WSs.q() * anchor.T_SsSj.q());
      weights.push_back(anchor.weight);
    }
    const Quat q_new = weighted_quaternion_average(rotations, weights);
    const Quat q_corr = q_new * ref.q.conjugate();  // previous orientation -> new
    ref.r = r_new;
    ref.q = q_new;
    ref.v = q_corr * ref.v;
  }
  return out;
}

}  // namespace forestnav
