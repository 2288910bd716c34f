#include "forestnav/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace forestnav {

namespace {

int int_log2(int v) {
  int l = 0;
  while ((1 << (l + 1)) <= v) ++l;
  return l;
}

}  // namespace

OccupancySubmap::OccupancySubmap(int host_keyframe_id, const Pose& T_WSk,
                                 const MappingConfig& config)
    : host_keyframe_id_(host_keyframe_id),
      T_WSk_(T_WSk),
      T_SkW_(T_WSk.inverse()),
      config_(config) {
  if (config.resolution_m <= 0.0 || config.root_side_m <= 0.0) {
    throw std::invalid_argument("OccupancySubmap: nonpositive resolution or side");
  }
  voxels_per_side_ = static_cast<int>(std::lround(config.root_side_m / config.resolution_m));
  if (voxels_per_side_ < 2 * kBrickSide ||
      (voxels_per_side_ & (voxels_per_side_ - 1)) != 0) {
    throw std::invalid_argument(
        "OccupancySubmap: root side must span a power-of-two voxel count >= 16");
  }
  tree_depth_ = int_log2(voxels_per_side_ / kBrickSide);
  half_side_m_ = 0.5 * config.root_side_m;
  nodes_.push_back({});  // root
}

void OccupancySubmap::set_T_WSk(const Pose& T) {
  T_WSk_ = T;
  T_SkW_ = T.inverse();
}

float* OccupancySubmap::voxel_for_write(int ix, int iy, int iz) {
  if (!touched_) {
    aabb_min_[0] = aabb_max_[0] = ix;
    aabb_min_[1] = aabb_max_[1] = iy;
    aabb_min_[2] = aabb_max_[2] = iz;
    touched_ = true;
  } else {
    aabb_min_[0] = std::min(aabb_min_[0], ix);
    aabb_min_[1] = std::min(aabb_min_[1], iy);
    aabb_min_[2] = std::min(aabb_min_[2], iz);
    aabb_max_[0] = std::max(aabb_max_[0], ix);
    aabb_max_[1] = std::max(aabb_max_[1], iy);
    aabb_max_[2] = std::max(aabb_max_[2], iz);
  }

  const int bx = ix >> 3, by = iy >> 3, bz = iz >> 3;
  int node = 0;
  int32_t leaf = 0;
  for (int l = 0; l < tree_depth_; ++l) {
    const int shift = tree_depth_ - 1 - l;
    const int ci = (((bx >> shift) & 1) << 2) | (((by >> shift) & 1) << 1) | ((bz >> shift) & 1);
    int32_t& slot = nodes_[static_cast<size_t>(node)][static_cast<size_t>(ci)];
    if (l + 1 < tree_depth_) {
      int32_t next = slot;
      if (next == 0) {
        next = static_cast<int32_t>(nodes_.size());
        slot = next;
        nodes_.push_back({});  // invalidates `slot`
      }
      node = next;
    } else {
      if (slot == 0) {
        slot = -static_cast<int32_t>(bricks_.size()) - 1;
        bricks_.emplace_back();
        brick_base_.push_back({static_cast<uint16_t>(bx << 3), static_cast<uint16_t>(by << 3),
                               static_cast<uint16_t>(bz << 3)});
      }
      leaf = slot;
    }
  }
  Brick& brick = bricks_[static_cast<size_t>(-leaf - 1)];
  return &brick.lo[static_cast<size_t>(((ix & 7) << 6) | ((iy & 7) << 3) | (iz & 7))];
}

int32_t OccupancySubmap::brick_slot_at(int bx, int by, int bz) const {
  int node = 0;
  for (int l = 0; l < tree_depth_; ++l) {
    const int shift = tree_depth_ - 1 - l;
    const int ci = (((bx >> shift) & 1) << 2) | (((by >> shift) & 1) << 1) | ((bz >> shift) & 1);
    const int32_t slot = nodes_[static_cast<size_t>(node)][static_cast<size_t>(ci)];
    if (slot == 0) return 0;
    if (l + 1 == tree_depth_) return slot;
    node = slot;
  }
  return 0;
}

void OccupancySubmap::apply_update(float* v, double delta) {
  const double next = static_cast<double>(*v) + delta;
  *v = static_cast<float>(std::clamp(next, config_.l_min, config_.l_max));
}

void OccupancySubmap::traverse_ray(const Vec3& o_S, const Vec3& e_S, bool endpoint_is_hit) {
  const double inv_res = 1.0 / config_.resolution_m;
  const Eigen::Vector3d o = (o_S + Vec3::Constant(half_side_m_)) * inv_res;
  const Eigen::Vector3d e = (e_S + Vec3::Constant(half_side_m_)) * inv_res;
  const Eigen::Vector3d d = e - o;
  const double vps = static_cast<double>(voxels_per_side_);

  double t0 = 0.0, t1 = 1.0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < 0.0 || o[a] >= vps) return;
    } else {
      double ta = -o[a] / d[a];
      double tb = (vps - o[a]) / d[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
  }
  if (t0 > t1) return;

  int ev[3];
  bool end_inside = true;
  for (int a = 0; a < 3; ++a) {
    ev[a] = static_cast<int>(std::floor(e[a]));
    if (ev[a] < 0 || ev[a] >= voxels_per_side_) end_inside = false;
  }

  const double t_start = t0 > 0.0 ? std::min(t0 + 1e-9, t1) : 0.0;
  const Eigen::Vector3d p = o + t_start * d;
  int v[3];
  int step[3];
  double t_max[3], t_delta[3];
  for (int a = 0; a < 3; ++a) {
    v[a] = std::clamp(static_cast<int>(std::floor(p[a])), 0, voxels_per_side_ - 1);
    if (std::abs(d[a]) < 1e-12) {
      step[a] = 0;
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    } else {
      step[a] = d[a] > 0.0 ? 1 : -1;
      const double boundary = d[a] > 0.0 ? v[a] + 1.0 : static_cast<double>(v[a]);
      t_max[a] = (boundary - o[a]) / d[a];
      t_delta[a] = 1.0 / std::abs(d[a]);
    }
  }

  const int max_steps = 4 * voxels_per_side_ + 8;
  for (int i = 0; i < max_steps; ++i) {
    if (end_inside && v[0] == ev[0] && v[1] == ev[1] && v[2] == ev[2]) {
      apply_update(voxel_for_write(v[0], v[1], v[2]),
                   endpoint_is_hit ? config_.l_hit : config_.l_miss);
      return;
    }
    apply_update(voxel_for_write(v[0], v[1], v[2]), config_.l_miss);
    const int axis = t_max[0] < t_max[1] ? (t_max[0] < t_max[2] ? 0 : 2)
                                         : (t_max[1] < t_max[2] ? 1 : 2);
    if (t_max[axis] > t1 + 1e-12) return;  // segment ended inside the current voxel
    v[axis] += step[axis];
    if (v[axis] < 0 || v[axis] >= voxels_per_side_) return;
    t_max[axis] += t_delta[axis];
  }
}

void OccupancySubmap::integrate_depth(const Pose& T_WC, const DepthImage& depth) {
  const CameraIntrinsics& k = depth.intrinsics;
  if (depth.depths.size() != static_cast<size_t>(k.width) * static_cast<size_t>(k.height) ||
      k.width <= 0 || k.height <= 0 || k.fx <= 0.0 || k.fy <= 0.0) {
    throw std::invalid_argument("integrate_depth: depth buffer does not match intrinsics");
  }
  const Pose T_SkC = T_SkW_ * T_WC;
  const Vec3 origin = T_SkC.r();
  const Eigen::Matrix3d R = T_SkC.q().toRotationMatrix();

  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const float z = depth.depths[static_cast<size_t>(v) * k.width + u];
      const bool valid = z > 0.0f;
      if (!valid && config_.carve_invalid_range_m <= 0.0) continue;
      const double range = valid ? static_cast<double>(z) : config_.carve_invalid_range_m;
      const Vec3 d_c((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const Vec3 endpoint = origin + R * (d_c * range);
      traverse_ray(origin, endpoint, valid);
    }
  }
}

void OccupancySubmap::clear_sphere(const Vec3& p_W, double radius_m) {
  if (!(radius_m > 0.0)) {
    throw std::invalid_argument("clear_sphere: radius must be positive");
  }
  const Vec3 c = T_SkW_ * p_W;
  const double inv_res = 1.0 / config_.resolution_m;
  int lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, static_cast<int>(std::floor((c[a] - radius_m + half_side_m_) * inv_res)));
    hi[a] = std::min(voxels_per_side_ - 1,
                     static_cast<int>(std::floor((c[a] + radius_m + half_side_m_) * inv_res)));
  }
  const double r2 = radius_m * radius_m;
  for (int ix = lo[0]; ix <= hi[0]; ++ix) {
    for (int iy = lo[1]; iy <= hi[1]; ++iy) {
      for (int iz = lo[2]; iz <= hi[2]; ++iz) {
        if ((voxel_center(ix, iy, iz) - c).squaredNorm() <= r2) {
          apply_update(voxel_for_write(ix, iy, iz), config_.l_miss);
        }
      }
    }
  }
}

float OccupancySubmap::log_odds_at(const Vec3& p_S) const {
  const double inv_res = 1.0 / config_.resolution_m;
  const int ix = static_cast<int>(std::floor((p_S.x() + half_side_m_) * inv_res));
  const int iy = static_cast<int>(std::floor((p_S.y() + half_side_m_) * inv_res));
  const int iz = static_cast<int>(std::floor((p_S.z() + half_side_m_) * inv_res));
  if (!in_bounds(ix, iy, iz)) return 0.0f;
  const int32_t slot = brick_slot_at(ix >> 3, iy >> 3, iz >> 3);
  if (slot == 0) return 0.0f;
  return bricks_[static_cast<size_t>(-slot - 1)]
      .lo[static_cast<size_t>(((ix & 7) << 6) | ((iy & 7) << 3) | (iz & 7))];
}

OccupancyClass OccupancySubmap::classify_local(const Vec3& p_S) const {
  const float lo = log_odds_at(p_S);
  if (lo < config_.alpha) return OccupancyClass::Free;
  if (lo > config_.beta) return OccupancyClass::Occupied;
  return OccupancyClass::Unknown;
}

OccupancyClass OccupancySubmap::classify_world(const Vec3& p_W) const {
  return classify_local(T_SkW_ * p_W);
}

Vec3 OccupancySubmap::aabb_min() const {
  return Vec3(aabb_min_[0], aabb_min_[1], aabb_min_[2]) * config_.resolution_m -
         Vec3::Constant(half_side_m_);
}

Vec3 OccupancySubmap::aabb_max() const {
  return Vec3(aabb_max_[0] + 1, aabb_max_[1] + 1, aabb_max_[2] + 1) * config_.resolution_m -
         Vec3::Constant(half_side_m_);
}

Vec3 OccupancySubmap::voxel_center(int ix, int iy, int iz) const {
  return Vec3(ix + 0.5, iy + 0.5, iz + 0.5) * config_.resolution_m -
         Vec3::Constant(half_side_m_);
}

void OccupancySubmap::for_each_voxel(
    const std::function<void(int, int, int, float)>& fn) const {
  for (size_t b = 0; b < bricks_.size(); ++b) {
    const auto& base = brick_base_[b];
    const Brick& brick = bricks_[b];
    for (int x = 0; x < kBrickSide; ++x) {
      for (int y = 0; y < kBrickSide; ++y) {
        for (int z = 0; z < kBrickSide; ++z) {
          fn(base[0] + x, base[1] + y, base[2] + z,
             brick.lo[static_cast<size_t>((x << 6) | (y << 3) | z)]);
        }
      }
    }
  }
}

float OccupancySubmap::Cursor::log_odds(const Vec3& p_S) {
  const OccupancySubmap& m = *map_;
  const double inv_res = 1.0 / m.config_.resolution_m;
  const int ix = static_cast<int>(std::floor((p_S.x() + m.half_side_m_) * inv_res));
  const int iy = static_cast<int>(std::floor((p_S.y() + m.half_side_m_) * inv_res));
  const int iz = static_cast<int>(std::floor((p_S.z() + m.half_side_m_) * inv_res));
  if (!m.in_bounds(ix, iy, iz)) return 0.0f;
  const int bx = ix >> 3, by = iy >> 3, bz = iz >> 3;
  if (bx != bx_ || by != by_ || bz != bz_) {
    brick_slot_ = m.brick_slot_at(bx, by, bz);
    bx_ = bx;
    by_ = by;
    bz_ = bz;
  }
  if (brick_slot_ == 0) return 0.0f;
  return m.bricks_[static_cast<size_t>(-brick_slot_ - 1)]
      .lo[static_cast<size_t>(((ix & 7) << 6) | ((iy & 7) << 3) | (iz & 7))];
}

TriangleMesh OccupancySubmap::extract_mesh() const {
  TriangleMesh mesh;
  std::unordered_map<uint64_t, int> corner_index;
  corner_index.reserve(bricks_.size() * 64);

  auto corner = [&](int cx, int cy, int cz) {
    const uint64_t key =
        (static_cast<uint64_t>(cx) << 42) | (static_cast<uint64_t>(cy) << 21) |
        static_cast<uint64_t>(cz);
    auto [it, inserted] = corner_index.try_emplace(key, static_cast<int>(mesh.vertices.size()));
    if (inserted) {
      mesh.vertices.push_back(Vec3(cx, cy, cz) * config_.resolution_m -
                              Vec3::Constant(half_side_m_));
    }
    return it->second;
  };

  auto occupied_at = [&](int ix, int iy, int iz) {
    if (!in_bounds(ix, iy, iz)) return false;
    const int32_t slot = brick_slot_at(ix >> 3, iy >> 3, iz >> 3);
    if (slot == 0) return false;
    return bricks_[static_cast<size_t>(-slot - 1)]
               .lo[static_cast<size_t>(((ix & 7) << 6) | ((iy & 7) << 3) | (iz & 7))] >
           config_.beta;
  };

  for_each_voxel([&](int ix, int iy, int iz, float lo) {
    if (!(lo > config_.beta)) return;
    const int v[3] = {ix, iy, iz};
    for (int axis = 0; axis < 3; ++axis) {
      const int u_axis = (axis + 1) % 3;
      const int w_axis = (axis + 2) % 3;
      for (int dir = -1; dir <= 1; dir += 2) {
        int n[3] = {ix, iy, iz};
        n[axis] += dir;
        if (occupied_at(n[0], n[1], n[2])) continue;
        // Quad on the face plane, wound so the normal points along dir.
        int c[3];
        c[axis] = v[axis] + (dir > 0 ? 1 : 0);
        static const int kU[4] = {0, 1, 1, 0};
        static const int kW[4] = {0, 0, 1, 1};
        int q[4];
        for (int i = 0; i < 4; ++i) {
          const int idx = dir > 0 ? i : 3 - i;
          c[u_axis] = v[u_axis] + kU[idx];
          c[w_axis] = v[w_axis] + kW[idx];
          q[i] = corner(c[0], c[1], c[2]);
        }
        mesh.triangles.push_back({q[0], q[1], q[2]});
        mesh.triangles.push_back({q[0], q[2], q[3]});
      }
    }
  });
  return mesh;
}

nlohmann::json OccupancySubmap::to_json() const {
  nlohmann::json j;
  j["resolution_m"] = config_.resolution_m;
  j["host_keyframe_id"] = host_keyframe_id_;
  j["T_WSk"] = {{"q", {T_WSk_.q().w(), T_WSk_.q().x(), T_WSk_.q().y(), T_WSk_.q().z()}},
                {"r", {T_WSk_.r().x(), T_WSk_.r().y(), T_WSk_.r().z()}}};
  nlohmann::json voxels = nlohmann::json::array();
  for_each_voxel([&](int ix, int iy, int iz, float lo) {
    if (lo != 0.0f) voxels.push_back({ix, iy, iz, lo});
  });
  j["voxels"] = std::move(voxels);
  return j;
}

SubmapCollection::SubmapCollection(const MappingConfig& config) : config_(config) {}

std::optional<int> SubmapCollection::maybe_create_submap(const Keyframe& keyframe, int n) {
  if (n < 1) {
    throw std::invalid_argument("maybe_create_submap: n must be >= 1");
  }
  if (++keyframes_since_submap_ < n) return std::nullopt;
  keyframes_since_submap_ = 0;
  submaps_.emplace_back(keyframe.id, keyframe.T_WS, config_);
  return static_cast<int>(submaps_.size()) - 1;
}

bool SubmapCollection::integrate_depth(const Pose& T_WC, const DepthImage& depth) {
  if (submaps_.empty()) return false;
  submaps_.back().integrate_depth(T_WC, depth);
  return true;
}

bool SubmapCollection::clear_sphere(const Vec3& p_W, double radius_m) {
  if (submaps_.empty()) return false;
  submaps_.back().clear_sphere(p_W, radius_m);
  return true;
}

void SubmapCollection::update_keyframe_pose(int keyframe_id, const Pose& T_WS) {
  for (auto& submap : submaps_) {
    if (submap.host_keyframe_id() == keyframe_id) submap.set_T_WSk(T_WS);
  }
}

SubmapCollection::Classification SubmapCollection::classify(const Vec3& p_W,
                                                            int last_S) const {
  Classification result;
  const int n = static_cast<int>(submaps_.size());
  const int first = std::max(0, n - std::max(0, last_S));
  bool any_free = false;
  bool any_occupied = false;
  for (int i = n - 1; i >= first; --i) {
    const OccupancyClass c = submaps_[static_cast<size_t>(i)].classify_world(p_W);
    result.per_submap.emplace_back(i, c);
    any_free |= c == OccupancyClass::Free;
    any_occupied |= c == OccupancyClass::Occupied;
  }
  if (any_occupied) {
    result.aggregate = OccupancyClass::Occupied;
  } else if (any_free) {
    result.aggregate = OccupancyClass::Free;
  } else {
    result.aggregate = OccupancyClass::Unknown;
  }
  return result;
}

TriangleMesh SubmapCollection::extract_mesh() const {
  TriangleMesh combined;
  for (const auto& submap : submaps_) {
    TriangleMesh m = submap.extract_mesh();
    m.transform(submap.T_WSk());
    combined.append(m);
  }
  return combined;
}

SubmapQuery::SubmapQuery(const SubmapCollection& collection, int last_S) {
  const int n = static_cast<int>(collection.size());
  const int first = std::max(0, n - std::max(0, last_S));
  entries_.reserve(static_cast<size_t>(n - first));
  for (int i = n - 1; i >= first; --i) {
    const OccupancySubmap& m = collection.submap(static_cast<size_t>(i));
    entries_.push_back({&m, m.T_WSk().inverse(), OccupancySubmap::Cursor(m)});
  }
}

OccupancyClass SubmapQuery::aggregate(const Vec3& p_W, double alpha, double beta) {
  bool any_free = false;
  for (auto& e : entries_) {
    const float lo = e.cursor.log_odds(e.T_SkW * p_W);
    if (lo > beta) return OccupancyClass::Occupied;
    if (lo < alpha) any_free = true;
  }
  return any_free ? OccupancyClass::Free : OccupancyClass::Unknown;
}

}  // namespace forestnav
