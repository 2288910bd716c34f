#include "forestnav/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

namespace forestnav {

namespace {

// Sample-point template for the swept-volume check: a disc grid (pitch
// spacing, sorted centre-out so unknown space fails fast) and a forward
// half-ball grid for the end cap.
class SweptVolumeChecker {
 public:
  SweptVolumeChecker(SubmapQuery& query, double radius, double pitch, double alpha,
                     double beta)
      : query_(&query), radius_(radius), pitch_(pitch), alpha_(alpha), beta_(beta) {
    const int n = static_cast<int>(std::floor(radius / pitch));
    for (int i = -n; i <= n; ++i) {
      for (int j = -n; j <= n; ++j) {
        const Eigen::Vector2d d(i * pitch, j * pitch);
        if (d.squaredNorm() <= radius * radius) disc_.push_back(d);
      }
    }
    std::sort(disc_.begin(), disc_.end(), [](const auto& a, const auto& b) {
      if (a.squaredNorm() != b.squaredNorm()) return a.squaredNorm() < b.squaredNorm();
      if (a.x() != b.x()) return a.x() < b.x();
      return a.y() < b.y();
    });
    for (int i = 0; i <= n; ++i) {  // +x half of the ball, axis-local coords
      for (int j = -n; j <= n; ++j) {
        for (int k = -n; k <= n; ++k) {
          const Vec3 d(i * pitch, j * pitch, k * pitch);
          if (d.squaredNorm() <= radius * radius) half_ball_.push_back(d);
        }
      }
    }
  }

  bool valid(const Vec3& a, const Vec3& b) {
    const Vec3 diff = b - a;
    const double len = diff.norm();
    Vec3 dir(1, 0, 0);
    if (len > 1e-9) dir = diff / len;

    Vec3 e1, e2;
    make_basis(dir, e1, e2);

    if (len > 1e-9) {
      const int stations = static_cast<int>(std::ceil(len / pitch_));
      const double step = len / stations;
      for (int s = 0; s <= stations; ++s) {
        const Vec3 base = a + (s * step) * dir;
        for (const auto& d : disc_) {
          if (!free_at(base + d.x() * e1 + d.y() * e2)) return false;
        }
      }
    } else {
      // Degenerate segment: check the full ball around b.
      for (const auto& p : half_ball_) {
        if (!free_at(b - p.x() * dir + p.y() * e1 + p.z() * e2)) return false;
      }
    }
    for (const auto& p : half_ball_) {
      if (!free_at(b + p.x() * dir + p.y() * e1 + p.z() * e2)) return false;
    }
    return true;
  }

 private:
  static void make_basis(const Vec3& dir, Vec3& e1, Vec3& e2) {
    int k = 0;
    for (int a = 1; a < 3; ++a) {
      if (std::abs(dir[a]) < std::abs(dir[k])) k = a;
    }
    e1 = dir.cross(Vec3::Unit(k)).normalized();
    e2 = dir.cross(e1);
  }

  bool free_at(const Vec3& p) {
    return query_->aggregate(p, alpha_, beta_) == OccupancyClass::Free;
  }

  SubmapQuery* query_;
  double radius_, pitch_, alpha_, beta_;
  std::vector<Eigen::Vector2d> disc_;
  std::vector<Vec3> half_ball_;
};

double polyline_length(const std::vector<Vec3>& wp) {
  double total = 0.0;
  for (size_t i = 1; i < wp.size(); ++i) total += (wp[i] - wp[i - 1]).norm();
  return total;
}

}  // namespace

double Path::length() const { return polyline_length(waypoints); }

bool is_segment_valid(const Vec3& a, const Vec3& b, double radius, SubmapQuery& query,
                      double pitch, double alpha, double beta) {
  if (radius <= 0.0 || pitch <= 0.0 || alpha >= 0.0) {
    throw std::invalid_argument("is_segment_valid: need radius > 0, pitch > 0, alpha < 0");
  }
  SweptVolumeChecker checker(query, radius, pitch, alpha, beta);
  return checker.valid(a, b);
}

bool is_segment_valid(const Vec3& a, const Vec3& b, double radius,
                      const SubmapCollection& collection, int last_S, double alpha) {
  SubmapQuery query(collection, last_S);
  return is_segment_valid(a, b, radius, query, collection.config().resolution_m * 0.5,
                          alpha, collection.config().beta);
}

PlanResult plan(const Vec3& start, const Vec3& goal, const SubmapCollection& collection,
                const PlannerParams& params) {
  if (params.radius_m <= 0.0 || params.alpha >= 0.0 || params.max_edge_m <= 0.0) {
    throw std::invalid_argument("plan: need radius > 0, alpha < 0, max_edge > 0");
  }
  PlanResult res;
  if ((goal - start).norm() < 1e-9) {
    res.path = Path{{start}};
    res.cost = 0.0;
    res.first_solution_cost = 0.0;
    return res;
  }

  SubmapQuery query(collection, params.last_S);
  SweptVolumeChecker checker(query, params.radius_m,
                             collection.config().resolution_m * 0.5, params.alpha,
                             collection.config().beta);

  if (checker.valid(start, goal)) {
    res.path = Path{{start, goal}};
    res.cost = (goal - start).norm();
    res.first_solution_cost = res.cost;
    return res;
  }

  // Sampling box around start/goal; z clamped but never excluding them.
  Vec3 lo = start.cwiseMin(goal), hi = start.cwiseMax(goal);
  lo.x() -= params.margin_xy_m;
  lo.y() -= params.margin_xy_m;
  hi.x() += params.margin_xy_m;
  hi.y() += params.margin_xy_m;
  lo.z() = std::min(std::max(lo.z() - params.margin_z_m, params.min_z_m),
                    std::min(start.z(), goal.z()));
  hi.z() = std::max(std::min(hi.z() + params.margin_z_m, params.max_z_m),
                    std::max(start.z(), goal.z()));

  const int max_iters =
      params.max_iterations > 0
          ? params.max_iterations
          : static_cast<int>(std::lround(params.budget_s * params.iterations_per_second));

  std::mt19937 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Vec3> pos{start};
  std::vector<int> parent{-1};
  std::vector<double> cost{0.0};
  std::vector<std::vector<int>> children{{}};
  int goal_idx = -1;

  const double c_min = (goal - start).norm();
  const Vec3 center = 0.5 * (start + goal);
  Eigen::Matrix3d C;
  {
    const Vec3 a1 = (goal - start) / c_min;
    int k = 0;
    for (int a = 1; a < 3; ++a) {
      if (std::abs(a1[a]) < std::abs(a1[k])) k = a;
    }
    const Vec3 b = a1.cross(Vec3::Unit(k)).normalized();
    C.col(0) = a1;
    C.col(1) = b;
    C.col(2) = a1.cross(b);
  }

  const double volume = (hi - lo).prod();
  const double gamma = 2.5 * std::cbrt(volume / (4.0 / 3.0 * std::numbers::pi));

  auto sample_box = [&] {
    Vec3 s;
    for (int a = 0; a < 3; ++a) s[a] = lo[a] + unit(rng) * (hi[a] - lo[a]);
    return s;
  };
  auto informed_sample = [&](double c_best) {
    const double r1 = 0.5 * c_best;
    const double r2 = 0.5 * std::sqrt(std::max(c_best * c_best - c_min * c_min, 0.0));
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Vec3 u;
      do {
        u = Vec3(2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0);
      } while (u.squaredNorm() > 1.0);
      const Vec3 x = center + C * Vec3(r1 * u.x(), r2 * u.y(), r2 * u.z());
      if ((x.array() >= lo.array()).all() && (x.array() <= hi.array()).all()) return x;
    }
    return Vec3(start + unit(rng) * (goal - start));  // on the axis: always admissible
  };
  auto reparent = [&](int node, int new_parent, double new_cost) {
    auto& siblings = children[static_cast<size_t>(parent[static_cast<size_t>(node)])];
    siblings.erase(std::find(siblings.begin(), siblings.end(), node));
    parent[static_cast<size_t>(node)] = new_parent;
    children[static_cast<size_t>(new_parent)].push_back(node);
    const double delta = new_cost - cost[static_cast<size_t>(node)];
    std::vector<int> stack{node};
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      cost[static_cast<size_t>(v)] += delta;
      for (int c : children[static_cast<size_t>(v)]) stack.push_back(c);
    }
  };

  for (int iter = 1; iter <= max_iters; ++iter) {
    res.iterations = iter;
    const double c_best = goal_idx >= 0 ? cost[static_cast<size_t>(goal_idx)]
                                        : std::numeric_limits<double>::infinity();
    if (c_best <= params.stop_cost_ratio * c_min) break;

    Vec3 x_rand;
    if (unit(rng) < params.goal_bias) {
      x_rand = goal;
    } else if (goal_idx >= 0) {
      res.informed = true;
      x_rand = informed_sample(c_best);
      if ((x_rand - start).norm() + (x_rand - goal).norm() > c_best + 1e-9) {
        ++res.informed_violations;
      }
    } else {
      x_rand = sample_box();
    }

    int nearest = 0;
    double nearest_d2 = (pos[0] - x_rand).squaredNorm();
    for (size_t i = 1; i < pos.size(); ++i) {
      const double d2 = (pos[i] - x_rand).squaredNorm();
      if (d2 < nearest_d2) {
        nearest_d2 = d2;
        nearest = static_cast<int>(i);
      }
    }
    const double nearest_d = std::sqrt(nearest_d2);
    if (nearest_d < 1e-9) continue;
    const Vec3 x_new =
        nearest_d > params.max_edge_m
            ? Vec3(pos[static_cast<size_t>(nearest)] +
                   (x_rand - pos[static_cast<size_t>(nearest)]) *
                       (params.max_edge_m / nearest_d))
            : x_rand;

    const double n = static_cast<double>(pos.size());
    const double r_n =
        std::min(params.max_edge_m, gamma * std::cbrt(std::log(n + 1.0) / (n + 1.0)));

    std::vector<int> neighbors;
    for (size_t i = 0; i < pos.size(); ++i) {
      if ((pos[i] - x_new).norm() <= r_n) neighbors.push_back(static_cast<int>(i));
    }

    // Parent selection: cheapest-first among {nearest} + neighbors, gated by
    // segment validity.
    std::vector<std::pair<double, int>> candidates;
    candidates.emplace_back(
        cost[static_cast<size_t>(nearest)] + (x_new - pos[static_cast<size_t>(nearest)]).norm(),
        nearest);
    for (int i : neighbors) {
      if (i != nearest) {
        candidates.emplace_back(cost[static_cast<size_t>(i)] + (x_new - pos[static_cast<size_t>(i)]).norm(), i);
      }
    }
    std::sort(candidates.begin(), candidates.end());
    int chosen = -1;
    double chosen_cost = 0.0;
    for (const auto& [c, i] : candidates) {
      if (checker.valid(pos[static_cast<size_t>(i)], x_new)) {
        chosen = i;
        chosen_cost = c;
        break;
      }
    }
    if (chosen < 0) continue;

    const int k = static_cast<int>(pos.size());
    pos.push_back(x_new);
    parent.push_back(chosen);
    cost.push_back(chosen_cost);
    children.emplace_back();
    children[static_cast<size_t>(chosen)].push_back(k);

    // Goal connection.
    const double goal_d = (goal - x_new).norm();
    if (goal_d <= params.max_edge_m) {
      if (goal_idx < 0) {
        if (checker.valid(x_new, goal)) {
          goal_idx = static_cast<int>(pos.size());
          pos.push_back(goal);
          parent.push_back(k);
          cost.push_back(chosen_cost + goal_d);
          children.emplace_back();
          children[static_cast<size_t>(k)].push_back(goal_idx);
          res.first_solution_cost = cost[static_cast<size_t>(goal_idx)];
        }
      } else if (chosen_cost + goal_d + 1e-12 < cost[static_cast<size_t>(goal_idx)] &&
                 checker.valid(x_new, goal)) {
        reparent(goal_idx, k, chosen_cost + goal_d);
      }
    }

    // Rewire neighbors through the new node, cost-gated before validity.
    for (int i : neighbors) {
      if (i == chosen || i == 0) continue;
      const double through = chosen_cost + (pos[static_cast<size_t>(i)] - x_new).norm();
      if (through + 1e-12 < cost[static_cast<size_t>(i)] &&
          checker.valid(x_new, pos[static_cast<size_t>(i)])) {
        reparent(i, k, through);
      }
    }
  }
  res.nodes = static_cast<int>(pos.size());
  if (goal_idx < 0) return res;

  std::vector<Vec3> raw;
  for (int i = goal_idx; i >= 0; i = parent[static_cast<size_t>(i)]) {
    raw.push_back(pos[static_cast<size_t>(i)]);
  }
  std::reverse(raw.begin(), raw.end());

  // Greedy shortcutting: each accepted jump is re-validated, single-step
  // jumps are existing tree edges.
  std::vector<Vec3> out{raw.front()};
  size_t i = 0;
  while (i + 1 < raw.size()) {
    size_t j = raw.size() - 1;
    for (; j > i + 1; --j) {
      if (checker.valid(raw[i], raw[j])) break;
    }
    out.push_back(raw[j]);
    i = j;
  }
  res.path = Path{std::move(out)};
  res.cost = res.path->length();
  return res;
}

ReferenceTrajectory path_to_trajectory(const Path& path, double v_max, double a_max,
                                       double dt, double v_start, double initial_yaw,
                                       double t0) {
  if (path.waypoints.empty() || v_max <= 0.0 || a_max <= 0.0 || dt <= 0.0) {
    throw std::invalid_argument(
        "path_to_trajectory: need a nonempty path and positive v_max, a_max, dt");
  }
  std::vector<Vec3> wp;
  for (const auto& p : path.waypoints) {
    if (wp.empty() || (p - wp.back()).norm() > 1e-9) wp.push_back(p);
  }

  ReferenceTrajectory traj;
  if (wp.size() == 1) {
    traj.refs.push_back({wp[0], quat_from_yaw(initial_yaw), Vec3::Zero(), t0});
    return traj;
  }

  const size_t m = wp.size() - 1;
  std::vector<double> len(m);
  std::vector<Vec3> dir(m);
  for (size_t i = 0; i < m; ++i) {
    const Vec3 d = wp[i + 1] - wp[i];
    len[i] = d.norm();
    dir[i] = d / len[i];
  }

  // Corner speeds, then forward/backward passes so each segment's speed
  // change fits in 2*a*L.
  std::vector<double> corner(m + 1);
  corner[0] = std::clamp(v_start, 0.0, v_max);
  corner[m] = 0.0;
  for (size_t i = 1; i < m; ++i) {
    const double theta =
        std::atan2(dir[i - 1].cross(dir[i]).norm(), dir[i - 1].dot(dir[i]));
    corner[i] = v_max * (1.0 - theta / std::numbers::pi);
  }
  for (size_t i = 0; i < m; ++i) {
    corner[i + 1] = std::min(corner[i + 1],
                             std::sqrt(corner[i] * corner[i] + 2.0 * a_max * len[i]));
  }
  for (size_t i = m; i-- > 0;) {
    corner[i] = std::min(corner[i],
                         std::sqrt(corner[i + 1] * corner[i + 1] + 2.0 * a_max * len[i]));
  }

  struct Segment {
    double va, vp, vb, t_acc, t_cruise, t_dec, d_acc, d_cruise, duration;
  };
  std::vector<Segment> segs(m);
  double total_time = 0.0;
  for (size_t i = 0; i < m; ++i) {
    Segment& s = segs[i];
    s.va = corner[i];
    s.vb = corner[i + 1];
    s.vp = std::min(v_max, std::sqrt((2.0 * a_max * len[i] + s.va * s.va + s.vb * s.vb) / 2.0));
    s.t_acc = (s.vp - s.va) / a_max;
    s.t_dec = (s.vp - s.vb) / a_max;
    s.d_acc = (s.vp * s.vp - s.va * s.va) / (2.0 * a_max);
    const double d_dec = (s.vp * s.vp - s.vb * s.vb) / (2.0 * a_max);
    s.d_cruise = std::max(0.0, len[i] - s.d_acc - d_dec);
    s.t_cruise = s.vp > 1e-12 ? s.d_cruise / s.vp : 0.0;
    s.duration = s.t_acc + s.t_cruise + s.t_dec;
    total_time += s.duration;
  }

  double yaw = initial_yaw;
  auto yaw_for = [&yaw](const Vec3& d) {
    if (std::hypot(d.x(), d.y()) > 1e-9) yaw = std::atan2(d.y(), d.x());
    return yaw;
  };

  size_t si = 0;
  double seg_start = 0.0;
  for (long j = 0;; ++j) {
    const double tau = static_cast<double>(j) * dt;
    if (tau >= total_time - 1e-12) break;
    while (si + 1 < m && tau >= seg_start + segs[si].duration) {
      seg_start += segs[si].duration;
      ++si;
    }
    const Segment& s = segs[si];
    const double local = tau - seg_start;
    double speed, dist;
    if (local < s.t_acc) {
      speed = s.va + a_max * local;
      dist = s.va * local + 0.5 * a_max * local * local;
    } else if (local < s.t_acc + s.t_cruise) {
      const double tc = local - s.t_acc;
      speed = s.vp;
      dist = s.d_acc + s.vp * tc;
    } else {
      const double td = std::min(local - s.t_acc - s.t_cruise, s.t_dec);
      speed = s.vp - a_max * td;
      dist = s.d_acc + s.d_cruise + s.vp * td - 0.5 * a_max * td * td;
    }
    traj.refs.push_back({Vec3(wp[si] + dist * dir[si]), quat_from_yaw(yaw_for(dir[si])),
                         Vec3(speed * dir[si]), t0 + tau});
  }
  traj.refs.push_back(
      {wp[m], quat_from_yaw(yaw_for(dir[m - 1])), Vec3::Zero(), t0 + total_time});
  return traj;
}

std::string path_to_csv(const Path& path) {
  std::string out = "x,y,z\n";
  char line[128];
  for (const auto& p : path.waypoints) {
    std::snprintf(line, sizeof(line), "%.9f,%.9f,%.9f\n", p.x(), p.y(), p.z());
    out += line;
  }
  return out;
}

std::string trajectory_to_csv(const ReferenceTrajectory& traj) {
  std::string out = "t,x,y,z,qw,qx,qy,qz,vx,vy,vz\n";
  char line[256];
  for (const auto& r : traj.refs) {
    std::snprintf(line, sizeof(line),
                  "%.6f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n", r.t,
                  r.r.x(), r.r.y(), r.r.z(), r.q.w(), r.q.x(), r.q.y(), r.q.z(), r.v.x(),
                  r.v.y(), r.v.z());
    out += line;
  }
  return out;
}

}  // namespace forestnav
