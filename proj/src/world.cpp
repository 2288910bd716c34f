#include "forestnav/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace forestnav {

namespace {

constexpr double kRayEpsilon = 1e-9;

// Intersection of ray o + t*d (|d| = 1) with the finite closed cylinder
// (lateral surface and top cap). Returns smallest t > t_min, or -1.
double intersect_tree(const Vec3& o, const Vec3& d, const Tree& tree, double t_min) {
  double best = -1.0;
  const double ox = o.x() - tree.center.x();
  const double oy = o.y() - tree.center.y();
  const double r2 = tree.radius * tree.radius;

  // Lateral surface: quadratic in the xy plane.
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > kRayEpsilon) {
    const double b = 2.0 * (ox * d.x() + oy * d.y());
    const double c = ox * ox + oy * oy - r2;
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
        if (t <= t_min) continue;
        const double z = o.z() + t * d.z();
        if (z >= 0.0 && z <= tree.height) {
          if (best < 0.0 || t < best) best = t;
          break;  // candidates are ordered
        }
      }
    }
  }

  // Top cap.
  if (std::abs(d.z()) > kRayEpsilon) {
    const double t = (tree.height - o.z()) / d.z();
    if (t > t_min && (best < 0.0 || t < best)) {
      const double x = ox + t * d.x();
      const double y = oy + t * d.y();
      if (x * x + y * y <= r2) best = t;
    }
  }
  return best;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

CameraIntrinsics CameraIntrinsics::from_fov(int width, int height, double hfov_deg) {
  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  const double half = 0.5 * hfov_deg * M_PI / 180.0;
  k.fx = 0.5 * width / std::tan(half);
  k.fy = k.fx;
  k.cx = 0.5 * (width - 1);
  k.cy = 0.5 * (height - 1);
  return k;
}

size_t DepthImage::valid_count() const {
  size_t n = 0;
  for (float d : depths) {
    if (d > 0.0f) ++n;
  }
  return n;
}

ForestWorld ForestWorld::generate(const ForestWorldConfig& config) {
  if (config.side_m <= 0.0) {
    throw std::invalid_argument("ForestWorld: side_m must be positive");
  }
  ForestWorld world;
  world.config_ = config;

  if (!config.explicit_trees.empty()) {
    world.trees_ = config.explicit_trees;
    for (auto& t : world.trees_) {
      t.center.z() = 0.0;
      if (t.radius <= 0.0 || t.height <= 0.0) {
        throw std::invalid_argument("ForestWorld: explicit tree with nonpositive size");
      }
    }
    world.build_grid();
    return world;
  }

  const double hectares = config.side_m * config.side_m / 10000.0;
  const size_t count = static_cast<size_t>(std::ceil(hectares * config.density_per_ha - 1e-9));

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> coord(0.0, config.side_m);
  std::uniform_real_distribution<double> radius(config.radius_min_m, config.radius_max_m);
  std::uniform_real_distribution<double> height(config.height_min_m, config.height_max_m);

  const size_t max_attempts = 1000 * (count + 1);
  size_t attempts = 0;
  world.trees_.reserve(count);
  while (world.trees_.size() < count) {
    if (++attempts > max_attempts) {
      throw std::runtime_error(
          "ForestWorld: requested density infeasible under min_spacing after bounded attempts");
    }
    Tree t;
    t.center = Vec3(coord(rng), coord(rng), 0.0);
    t.radius = radius(rng);
    t.height = height(rng);
    bool ok = true;
    for (const auto& other : world.trees_) {
      const double dx = t.center.x() - other.center.x();
      const double dy = t.center.y() - other.center.y();
      if (dx * dx + dy * dy < config.min_spacing_m * config.min_spacing_m) {
        ok = false;
        break;
      }
    }
    if (ok) world.trees_.push_back(t);
  }
  world.build_grid();
  return world;
}

void ForestWorld::build_grid() {
  cell_size_ = 4.0;
  grid_dim_ = std::max(1, static_cast<int>(std::ceil(config_.side_m / cell_size_)));
  grid_.assign(static_cast<size_t>(grid_dim_) * grid_dim_, {});
  for (size_t i = 0; i < trees_.size(); ++i) {
    const Tree& t = trees_[i];
    const int cx0 = std::max(0, static_cast<int>((t.center.x() - t.radius) / cell_size_));
    const int cx1 = std::min(grid_dim_ - 1, static_cast<int>((t.center.x() + t.radius) / cell_size_));
    const int cy0 = std::max(0, static_cast<int>((t.center.y() - t.radius) / cell_size_));
    const int cy1 = std::min(grid_dim_ - 1, static_cast<int>((t.center.y() + t.radius) / cell_size_));
    for (int cy = cy0; cy <= cy1; ++cy) {
      for (int cx = cx0; cx <= cx1; ++cx) {
        grid_[static_cast<size_t>(cy) * grid_dim_ + cx].push_back(static_cast<int>(i));
      }
    }
  }
}

const std::vector<int>& ForestWorld::cell_at(int cx, int cy) const {
  if (cx < 0 || cy < 0 || cx >= grid_dim_ || cy >= grid_dim_) return empty_cell_;
  return grid_[static_cast<size_t>(cy) * grid_dim_ + cx];
}

const std::vector<int>& ForestWorld::trees_near_cell(double x, double y) const {
  return cell_at(static_cast<int>(std::floor(x / cell_size_)),
                 static_cast<int>(std::floor(y / cell_size_)));
}

bool ForestWorld::collides(const Vec3& p, double mav_radius_m) const {
  if (p.z() < mav_radius_m) return true;
  // Check a 3x3 cell neighbourhood: mav_radius plus max tree radius stays
  // below one cell size for any sane configuration.
  const int cx = static_cast<int>(std::floor(p.x() / cell_size_));
  const int cy = static_cast<int>(std::floor(p.y() / cell_size_));
  const int reach = 1 + static_cast<int>(mav_radius_m / cell_size_);
  for (int dy = -reach; dy <= reach; ++dy) {
    for (int dx = -reach; dx <= reach; ++dx) {
      for (int idx : cell_at(cx + dx, cy + dy)) {
        const Tree& t = trees_[static_cast<size_t>(idx)];
        if (p.z() < 0.0 || p.z() > t.height) continue;
        const double ddx = p.x() - t.center.x();
        const double ddy = p.y() - t.center.y();
        const double limit = t.radius + mav_radius_m;
        if (ddx * ddx + ddy * ddy < limit * limit) return true;
      }
    }
  }
  return false;
}

double ForestWorld::surface_distance(const Vec3& p) const {
  double best = std::abs(p.z());  // ground plane
  const int cx = static_cast<int>(std::floor(p.x() / cell_size_));
  const int cy = static_cast<int>(std::floor(p.y() / cell_size_));
  // Expand rings of cells until the ring's nearest possible distance exceeds
  // the best found; the ground bound keeps this search local.
  const double max_tree_radius = config_.radius_max_m > 0 ? config_.radius_max_m : 1.0;
  for (int ring = 0;; ++ring) {
    const double ring_min_dist = (ring - 1) * cell_size_ - max_tree_radius;
    if (ring > 0 && ring_min_dist > best) break;
    if (ring > grid_dim_ + 1) break;
    for (int dy = -ring; dy <= ring; ++dy) {
      for (int dx = -ring; dx <= ring; ++dx) {
        if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
        for (int idx : cell_at(cx + dx, cy + dy)) {
          const Tree& t = trees_[static_cast<size_t>(idx)];
          const double dxy =
              std::hypot(p.x() - t.center.x(), p.y() - t.center.y());
          const double dr = dxy - t.radius;  // signed radial distance to lateral wall
          double d;
          if (p.z() < 0.0) {
            d = std::hypot(std::max(0.0, dr), -p.z());
          } else if (p.z() > t.height) {
            d = std::hypot(std::max(0.0, dr), p.z() - t.height);
          } else if (dr >= 0.0) {
            d = dr;  // beside the trunk
          } else {
            // Inside the trunk: nearest of lateral wall and the two caps.
            d = std::min(-dr, std::min(p.z(), t.height - p.z()));
          }
          best = std::min(best, d);
        }
      }
    }
  }
  return best;
}

TriangleMesh ForestWorld::ground_truth_mesh(double resolution_m) const {
  if (resolution_m <= 0.0) {
    throw std::invalid_argument("ground_truth_mesh: resolution must be positive");
  }
  TriangleMesh mesh;

  // Ground patch.
  const int n = std::max(1, static_cast<int>(std::ceil(config_.side_m / resolution_m)));
  const double step = config_.side_m / n;
  const int base = 0;
  for (int iy = 0; iy <= n; ++iy) {
    for (int ix = 0; ix <= n; ++ix) {
      mesh.vertices.emplace_back(ix * step, iy * step, 0.0);
    }
  }
  auto gv = [&](int ix, int iy) { return base + iy * (n + 1) + ix; };
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      mesh.triangles.push_back({gv(ix, iy), gv(ix + 1, iy), gv(ix + 1, iy + 1)});
      mesh.triangles.push_back({gv(ix, iy), gv(ix + 1, iy + 1), gv(ix, iy + 1)});
    }
  }

  for (const Tree& t : trees_) {
    const int seg = std::max(3, static_cast<int>(std::ceil(2.0 * M_PI * t.radius / resolution_m)));
    const int levels = std::max(1, static_cast<int>(std::ceil(t.height / resolution_m)));
    const double dz = t.height / levels;
    const int ring_base = static_cast<int>(mesh.vertices.size());
    for (int iz = 0; iz <= levels; ++iz) {
      for (int is = 0; is < seg; ++is) {
        const double a = 2.0 * M_PI * is / seg;
        mesh.vertices.emplace_back(t.center.x() + t.radius * std::cos(a),
                                   t.center.y() + t.radius * std::sin(a), iz * dz);
      }
    }
    auto rv = [&](int iz, int is) { return ring_base + iz * seg + (is % seg); };
    for (int iz = 0; iz < levels; ++iz) {
      for (int is = 0; is < seg; ++is) {
        mesh.triangles.push_back({rv(iz, is), rv(iz, is + 1), rv(iz + 1, is + 1)});
        mesh.triangles.push_back({rv(iz, is), rv(iz + 1, is + 1), rv(iz + 1, is)});
      }
    }
    // Top cap: fan from the center vertex to the top ring.
    const int center = static_cast<int>(mesh.vertices.size());
    mesh.vertices.emplace_back(t.center.x(), t.center.y(), t.height);
    for (int is = 0; is < seg; ++is) {
      mesh.triangles.push_back({center, rv(levels, is), rv(levels, is + 1)});
    }
  }
  return mesh;
}

nlohmann::json ForestWorld::to_json() const {
  nlohmann::json j;
  j["seed"] = config_.seed;
  j["side_m"] = config_.side_m;
  j["density_per_ha"] = config_.density_per_ha;
  j["min_spacing_m"] = config_.min_spacing_m;
  j["radius_range"] = {config_.radius_min_m, config_.radius_max_m};
  j["height_range"] = {config_.height_min_m, config_.height_max_m};
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& t : trees_) {
    trees.push_back({{"x", t.center.x()},
                     {"y", t.center.y()},
                     {"radius", t.radius},
                     {"height", t.height}});
  }
  j["trees"] = trees;
  return j;
}

ForestWorld ForestWorld::from_json(const nlohmann::json& j) {
  ForestWorldConfig cfg;
  cfg.seed = j.value("seed", uint64_t{1});
  cfg.side_m = j.at("side_m").get<double>();
  cfg.density_per_ha = j.value("density_per_ha", 0.0);
  cfg.min_spacing_m = j.value("min_spacing_m", 1.5);
  if (j.contains("radius_range")) {
    cfg.radius_min_m = j["radius_range"][0].get<double>();
    cfg.radius_max_m = j["radius_range"][1].get<double>();
  }
  if (j.contains("height_range")) {
    cfg.height_min_m = j["height_range"][0].get<double>();
    cfg.height_max_m = j["height_range"][1].get<double>();
  }
  for (const auto& tj : j.at("trees")) {
    Tree t;
    t.center = Vec3(tj.at("x").get<double>(), tj.at("y").get<double>(), 0.0);
    t.radius = tj.at("radius").get<double>();
    t.height = tj.at("height").get<double>();
    cfg.explicit_trees.push_back(t);
  }
  if (cfg.explicit_trees.empty()) {
    // An explicitly empty forest: keep the empty override by constructing directly.
    ForestWorld world;
    world.config_ = cfg;
    world.build_grid();
    return world;
  }
  return generate(cfg);
}

void ForestWorld::save_json(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("ForestWorld::save_json: cannot open " + path);
  }
  out << to_json().dump(2) << "\n";
}

ForestWorld ForestWorld::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("ForestWorld::load_json: cannot open " + path);
  }
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

double raycast_range(const ForestWorld& world, const Vec3& origin, const Vec3& dir,
                     double max_range) {
  double best = -1.0;

  // Ground plane.
  if (dir.z() < -kRayEpsilon) {
    const double t = -origin.z() / dir.z();
    if (t > 0.0 && t <= max_range) best = t;
  }

  // 2D DDA over the tree grid in the xy plane.
  const double cell = world.grid_cell_size();
  const double horiz = std::hypot(dir.x(), dir.y());
  if (horiz < kRayEpsilon) {
    // Vertical ray: only trees at this xy location matter.
    for (int idx : world.trees_near_cell(origin.x(), origin.y())) {
      const double t = intersect_tree(origin, dir, world.trees()[static_cast<size_t>(idx)], 0.0);
      if (t > 0.0 && t <= max_range && (best < 0.0 || t < best)) best = t;
    }
    return best;
  }

  int cx = static_cast<int>(std::floor(origin.x() / cell));
  int cy = static_cast<int>(std::floor(origin.y() / cell));
  const int step_x = dir.x() > 0.0 ? 1 : -1;
  const int step_y = dir.y() > 0.0 ? 1 : -1;
  const double inv_dx = std::abs(dir.x()) > kRayEpsilon ? 1.0 / dir.x() : 0.0;
  const double inv_dy = std::abs(dir.y()) > kRayEpsilon ? 1.0 / dir.y() : 0.0;
  double t_max_x = std::abs(dir.x()) > kRayEpsilon
                       ? ((cx + (step_x > 0 ? 1 : 0)) * cell - origin.x()) * inv_dx
                       : std::numeric_limits<double>::infinity();
  double t_max_y = std::abs(dir.y()) > kRayEpsilon
                       ? ((cy + (step_y > 0 ? 1 : 0)) * cell - origin.y()) * inv_dy
                       : std::numeric_limits<double>::infinity();
  const double t_delta_x = std::abs(dir.x()) > kRayEpsilon
                               ? cell / std::abs(dir.x())
                               : std::numeric_limits<double>::infinity();
  const double t_delta_y = std::abs(dir.y()) > kRayEpsilon
                               ? cell / std::abs(dir.y())
                               : std::numeric_limits<double>::infinity();

  double t_entry = 0.0;
  while (t_entry <= max_range) {
    const double cell_exit = std::min(t_max_x, t_max_y);
    for (int idx : world.trees_near_cell((cx + 0.5) * cell, (cy + 0.5) * cell)) {
      const double t = intersect_tree(origin, dir, world.trees()[static_cast<size_t>(idx)], 0.0);
      if (t > 0.0 && t <= max_range && (best < 0.0 || t < best)) best = t;
    }
    // Every cell whose entry precedes `best` has been scanned, so the first
    // hit is final once it falls inside the traversed region.
    if (best > 0.0 && best <= cell_exit) break;
    if (t_max_x < t_max_y) {
      t_entry = t_max_x;
      t_max_x += t_delta_x;
      cx += step_x;
    } else {
      t_entry = t_max_y;
      t_max_y += t_delta_y;
      cy += step_y;
    }
    // Outside the grid and heading away: nothing left to hit but ground.
    const int dim = static_cast<int>(std::ceil(world.side() / cell));
    if ((cx < -1 && step_x < 0) || (cx > dim && step_x > 0) ||
        (cy < -1 && step_y < 0) || (cy > dim && step_y > 0)) {
      break;
    }
  }
  if (best > max_range) best = -1.0;
  return best;
}

DepthImage raycast_depth(const ForestWorld& world, const Pose& T_WC,
                         const CameraIntrinsics& intrinsics, double max_range_m,
                         double noise_std_m, uint64_t seed) {
  if (max_range_m <= 0.0) {
    throw std::invalid_argument("raycast_depth: max_range must be positive");
  }
  DepthImage img;
  img.intrinsics = intrinsics;
  img.depths.assign(static_cast<size_t>(intrinsics.width) * intrinsics.height, -1.0f);

  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> noise(0.0, 1.0);

  const Vec3 origin = T_WC.r();
  const Eigen::Matrix3d R_WC = T_WC.q().toRotationMatrix();

  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = 0; u < intrinsics.width; ++u) {
      // Camera-frame direction with unit z so the ray parameter is z-depth.
      const Vec3 d_c((u - intrinsics.cx) / intrinsics.fx,
                     (v - intrinsics.cy) / intrinsics.fy, 1.0);
      const double norm = d_c.norm();
      const Vec3 d_w = (R_WC * d_c) / norm;
      const double range = raycast_range(world, origin, d_w, max_range_m * norm);
      if (range <= 0.0) continue;
      double depth = range / norm;  // back to z-depth
      if (noise_std_m > 0.0) {
        depth += noise_std_m * noise(rng);
        if (depth <= 0.01) depth = 0.01;
      }
      if (depth <= max_range_m) {
        img.depths[static_cast<size_t>(v) * intrinsics.width + u] = static_cast<float>(depth);
      }
    }
  }
  return img;
}

}  // namespace forestnav
