#include "forestnav/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace forestnav {

namespace {

using nlohmann::json;

// 21 bits per axis, two's-complement wrapped; cells that far apart cannot
// both hold vertices of one mesh at any sane tau.
uint64_t cell_key(int64_t x, int64_t y, int64_t z) {
  const uint64_t m = (1u << 21) - 1;
  return ((static_cast<uint64_t>(x) & m) << 42) | ((static_cast<uint64_t>(y) & m) << 21) |
         (static_cast<uint64_t>(z) & m);
}

double quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac;
}

}  // namespace

std::vector<double> surface_distances(const TriangleMesh& mesh, const ForestWorld& world) {
  std::vector<double> d;
  d.reserve(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) d.push_back(world.surface_distance(v));
  return d;
}

double reconstruction_accuracy(const TriangleMesh& reconstructed, const ForestWorld& world) {
  if (reconstructed.vertices.empty()) {
    throw std::invalid_argument("reconstruction_accuracy: empty mesh");
  }
  std::vector<double> sq = surface_distances(reconstructed, world);
  for (double& v : sq) v *= v;
  std::sort(sq.begin(), sq.end());  // fixed summation order for any vertex order
  double sum = 0.0;
  for (double v : sq) sum += v;
  return std::sqrt(sum / static_cast<double>(sq.size()));
}

double reconstruction_completeness(const TriangleMesh& reconstructed,
                                   const TriangleMesh& ground_truth, double tau_m) {
  if (!(tau_m > 0.0)) {
    throw std::invalid_argument("reconstruction_completeness: tau must be positive");
  }
  if (ground_truth.vertices.empty()) {
    throw std::invalid_argument("reconstruction_completeness: empty ground truth");
  }
  if (reconstructed.vertices.empty()) return 0.0;

  const double inv_tau = 1.0 / tau_m;
  std::unordered_map<uint64_t, std::vector<uint32_t>> grid;
  grid.reserve(reconstructed.vertices.size());
  for (size_t i = 0; i < reconstructed.vertices.size(); ++i) {
    const Vec3& v = reconstructed.vertices[i];
    grid[cell_key(static_cast<int64_t>(std::floor(v.x() * inv_tau)),
                  static_cast<int64_t>(std::floor(v.y() * inv_tau)),
                  static_cast<int64_t>(std::floor(v.z() * inv_tau)))]
        .push_back(static_cast<uint32_t>(i));
  }

  const double tau_sq = tau_m * tau_m;
  size_t matched = 0;
  for (const Vec3& g : ground_truth.vertices) {
    const int64_t cx = static_cast<int64_t>(std::floor(g.x() * inv_tau));
    const int64_t cy = static_cast<int64_t>(std::floor(g.y() * inv_tau));
    const int64_t cz = static_cast<int64_t>(std::floor(g.z() * inv_tau));
    bool hit = false;
    for (int64_t dx = -1; dx <= 1 && !hit; ++dx) {
      for (int64_t dy = -1; dy <= 1 && !hit; ++dy) {
        for (int64_t dz = -1; dz <= 1 && !hit; ++dz) {
          const auto it = grid.find(cell_key(cx + dx, cy + dy, cz + dz));
          if (it == grid.end()) continue;
          for (const uint32_t i : it->second) {
            if ((reconstructed.vertices[i] - g).squaredNorm() <= tau_sq) {
              hit = true;
              break;
            }
          }
        }
      }
    }
    if (hit) ++matched;
  }
  return 100.0 * static_cast<double>(matched) /
         static_cast<double>(ground_truth.vertices.size());
}

ReconstructionMetrics evaluate_reconstruction(const TriangleMesh& reconstructed,
                                              const TriangleMesh& ground_truth,
                                              const ForestWorld& world, double tau_m) {
  ReconstructionMetrics m;
  m.reconstructed_vertices = reconstructed.vertices.size();
  m.ground_truth_vertices = ground_truth.vertices.size();
  m.accuracy_rmse_m = reconstruction_accuracy(reconstructed, world);
  m.completeness_pct = reconstruction_completeness(reconstructed, ground_truth, tau_m);
  return m;
}

TriangleMesh crop_mesh(const TriangleMesh& mesh, const Vec3& lo, const Vec3& hi,
                       double margin_m) {
  const Vec3 a = lo - Vec3::Constant(margin_m);
  const Vec3 b = hi + Vec3::Constant(margin_m);
  std::vector<char> inside(mesh.vertices.size(), 0);
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    inside[i] = v.x() >= a.x() && v.x() <= b.x() && v.y() >= a.y() && v.y() <= b.y() &&
                v.z() >= a.z() && v.z() <= b.z();
  }
  TriangleMesh out;
  std::vector<int> remap(mesh.vertices.size(), -1);
  for (const auto& tri : mesh.triangles) {
    if (!inside[static_cast<size_t>(tri[0])] || !inside[static_cast<size_t>(tri[1])] ||
        !inside[static_cast<size_t>(tri[2])]) {
      continue;
    }
    std::array<int, 3> mapped;
    for (int k = 0; k < 3; ++k) {
      int& r = remap[static_cast<size_t>(tri[k])];
      if (r < 0) {
        r = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[static_cast<size_t>(tri[k])]);
      }
      mapped[k] = r;
    }
    out.triangles.push_back(mapped);
  }
  return out;
}

TriangleMesh mission_ground_truth_mesh(const MissionConfig& config, const ForestWorld& world,
                                       double resolution_m) {
  const std::vector<Vec3> goals = mission_goals(config);
  Vec3 lo = goals.front();
  Vec3 hi = goals.front();
  for (const Vec3& g : goals) {
    lo = lo.cwiseMin(g);
    hi = hi.cwiseMax(g);
  }
  const double margin_xy = 0.5 * config.depth.max_range_m;
  const CameraIntrinsics k = CameraIntrinsics::from_fov(config.depth.width, config.depth.height,
                                                        config.depth.hfov_deg);
  const double tan_half_vfov = (0.5 * config.depth.height) / k.fy;
  const double z_cap = hi.z() + tan_half_vfov * config.depth.max_range_m;
  lo.x() -= margin_xy;
  lo.y() -= margin_xy;
  lo.z() = -0.1;  // keep the ground patch
  hi.x() += margin_xy;
  hi.y() += margin_xy;
  hi.z() = z_cap;
  return crop_mesh(world.ground_truth_mesh(resolution_m), lo, hi, 0.0);
}

TrajectoryStats trajectory_stats(const MissionLog& log) {
  if (log.ticks.empty()) {
    throw std::invalid_argument("trajectory_stats: empty log");
  }
  const size_t n = log.ticks.size();
  std::vector<double> speeds(n);
  std::vector<double> dist(n, 0.0);  // cumulative distance up to each tick
  for (size_t i = 0; i < n; ++i) {
    speeds[i] = log.ticks[i].true_v.norm();
    if (i > 0) {
      dist[i] = dist[i - 1] + speeds[i] * (log.ticks[i].t - log.ticks[i - 1].t);
    }
  }

  TrajectoryStats s;
  double sum = 0.0;
  for (double v : speeds) sum += v;
  s.speed_mean_mps = sum / static_cast<double>(n);
  std::vector<double> sorted = speeds;
  std::sort(sorted.begin(), sorted.end());
  s.speed_q25_mps = quantile(sorted, 0.25);
  s.speed_median_mps = quantile(sorted, 0.5);
  s.speed_q75_mps = quantile(sorted, 0.75);
  s.speed_max_mps = sorted.back();
  s.distance_m = dist.back();
  s.duration_s = log.ticks.back().t - log.ticks.front().t;

  const auto error_at = [&](size_t i) {
    return (log.ticks[i].est_r - log.ticks[i].true_r).norm();
  };
  const auto consider = [&](size_t i) {
    const double e = error_at(i);
    s.drift_before_closure_m = std::max(s.drift_before_closure_m, e);
    if (dist[i] >= 1.0) {
      s.drift_before_closure_pct =
          std::max(s.drift_before_closure_pct, 100.0 * e / dist[i]);
    }
  };
  if (log.closure_ticks.empty()) {
    for (size_t i = 0; i < n; ++i) consider(i);
  } else {
    for (const int ct : log.closure_ticks) {
      if (ct > 0 && static_cast<size_t>(ct) <= n) consider(static_cast<size_t>(ct) - 1);
    }
  }
  return s;
}

ComparisonReport compare_slam_vio(const MissionConfig& config, double tau_m) {
  MissionConfig slam_cfg = config;
  slam_cfg.fuse_ground_truth = true;
  MissionConfig vio_cfg = slam_cfg;
  slam_cfg.estimator.loop_closure_enabled = true;
  vio_cfg.estimator.loop_closure_enabled = false;

  const MissionLog slam_log = run_mission(slam_cfg);
  const MissionLog vio_log = run_mission(vio_cfg);

  const ForestWorld world = ForestWorld::generate(config.world);
  const TriangleMesh gt =
      mission_ground_truth_mesh(config, world, config.mapping.resolution_m);

  const auto row = [&](const char* label, const MissionLog& log, bool gt_poses) {
    ModeRow r;
    r.label = label;
    const SubmapCollection& maps = gt_poses ? *log.gt_submaps : *log.submaps;
    r.metrics = evaluate_reconstruction(maps.extract_mesh(), gt, world, tau_m);
    r.completed = log.completed;
    r.collided = log.collided;
    r.planner_aborted = log.planner_aborted;
    r.loop_closures = log.loop_closures;
    return r;
  };

  ComparisonReport rep;
  rep.slam = row("slam", slam_log, false);
  rep.vio = row("vio", vio_log, false);
  rep.gt_slam = row("gt-slam", slam_log, true);
  rep.gt_vio = row("gt-vio", vio_log, true);
  rep.slam_stats = trajectory_stats(slam_log);
  rep.vio_stats = trajectory_stats(vio_log);

  const size_t common = std::min(slam_log.ticks.size(), vio_log.ticks.size());
  rep.divergence_tick = -1;
  for (size_t i = 0; i < common; ++i) {
    const TickRecord& a = slam_log.ticks[i];
    const TickRecord& b = vio_log.ticks[i];
    if (a.true_r.x() != b.true_r.x() || a.true_r.y() != b.true_r.y() ||
        a.true_r.z() != b.true_r.z() || a.true_yaw != b.true_yaw) {
      rep.divergence_tick = static_cast<int>(i);
      break;
    }
  }
  if (rep.divergence_tick < 0 && slam_log.ticks.size() != vio_log.ticks.size()) {
    rep.divergence_tick = static_cast<int>(common);
  }
  return rep;
}

json trajectory_stats_to_json(const TrajectoryStats& s) {
  return json{{"speed_mean_mps", s.speed_mean_mps},
              {"speed_q25_mps", s.speed_q25_mps},
              {"speed_median_mps", s.speed_median_mps},
              {"speed_q75_mps", s.speed_q75_mps},
              {"speed_max_mps", s.speed_max_mps},
              {"distance_m", s.distance_m},
              {"duration_s", s.duration_s},
              {"drift_before_closure_m", s.drift_before_closure_m},
              {"drift_before_closure_pct", s.drift_before_closure_pct}};
}

json reconstruction_metrics_to_json(const ReconstructionMetrics& m) {
  return json{{"accuracy_rmse_m", m.accuracy_rmse_m},
              {"completeness_pct", m.completeness_pct},
              {"reconstructed_vertices", m.reconstructed_vertices},
              {"ground_truth_vertices", m.ground_truth_vertices}};
}

json comparison_report_to_json(const ComparisonReport& rep) {
  const auto row = [](const ModeRow& r) {
    json j = reconstruction_metrics_to_json(r.metrics);
    j["label"] = r.label;
    j["completed"] = r.completed;
    j["collided"] = r.collided;
    j["planner_aborted"] = r.planner_aborted;
    j["loop_closures"] = r.loop_closures;
    return j;
  };
  return json{{"rows", json::array({row(rep.slam), row(rep.vio), row(rep.gt_slam),
                                    row(rep.gt_vio)})},
              {"slam_stats", trajectory_stats_to_json(rep.slam_stats)},
              {"vio_stats", trajectory_stats_to_json(rep.vio_stats)},
              {"divergence_tick", rep.divergence_tick}};
}

std::string comparison_report_table(const ComparisonReport& rep) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s  %15s  %16s  %9s  %13s\n", "mode",
                "accuracy_rmse_m", "completeness_pct", "completed", "loop_closures");
  out += line;
  for (const ModeRow* r : {&rep.slam, &rep.vio, &rep.gt_slam, &rep.gt_vio}) {
    std::snprintf(line, sizeof(line), "%-8s  %15.3f  %16.2f  %9s  %13d\n", r->label.c_str(),
                  r->metrics.accuracy_rmse_m, r->metrics.completeness_pct,
                  r->completed ? "yes" : "no", r->loop_closures);
    out += line;
  }
  std::snprintf(line, sizeof(line), "divergence_tick: %d\n", rep.divergence_tick);
  out += line;
  return out;
}

}  // namespace forestnav
