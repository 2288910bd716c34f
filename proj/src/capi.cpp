#include "forestnav/forestnav_c.h"

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "forestnav/eval.hpp"
#include "forestnav/sim.hpp"
#include "forestnav/world.hpp"

struct fn_config {
  forestnav::MissionConfig cfg;
};

struct fn_mission {
  forestnav::MissionLog log;
};

namespace {

using nlohmann::json;

thread_local std::string t_last_error;

// invalid_argument carries caller mistakes; the caller picks its status via
// on_invalid (config parsing faults map to FN_ERROR_CONFIG, bad handles and
// parameters to FN_ERROR_INVALID_ARGUMENT). runtime_error is what the
// library throws for file problems.
template <typename F>
fn_status guarded(F&& f, fn_status on_invalid = FN_ERROR_INVALID_ARGUMENT,
                  fn_status on_runtime = FN_ERROR_IO) {
  try {
    f();
    t_last_error.clear();
    return FN_OK;
  } catch (const std::invalid_argument& e) {
    t_last_error = e.what();
    return on_invalid;
  } catch (const std::runtime_error& e) {
    t_last_error = e.what();
    return on_runtime;
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return FN_ERROR_INTERNAL;
  }
}

fn_status fail(fn_status s, const char* message) {
  t_last_error = message;
  return s;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

}  // namespace

extern "C" {

const char* fn_version(void) { return "forestnav 0.1.0"; }

const char* fn_last_error(void) { return t_last_error.c_str(); }

fn_status fn_config_default(fn_config** out) {
  if (!out) return fail(FN_ERROR_INVALID_ARGUMENT, "fn_config_default: null output");
  *out = new fn_config{};
  t_last_error.clear();
  return FN_OK;
}

fn_status fn_config_load(const char* path, fn_config** out) {
  if (!path || !out) return fail(FN_ERROR_INVALID_ARGUMENT, "fn_config_load: null argument");
  *out = nullptr;
  return guarded(
      [&] { *out = new fn_config{forestnav::mission_config_from_json(load_json_file(path))}; },
      FN_ERROR_CONFIG);
}

fn_status fn_config_parse(const char* json_text, fn_config** out) {
  if (!json_text || !out) {
    return fail(FN_ERROR_INVALID_ARGUMENT, "fn_config_parse: null argument");
  }
  *out = nullptr;
  return guarded(
      [&] {
        json j;
        try {
          j = json::parse(json_text);
        } catch (const json::exception& e) {
          throw std::invalid_argument(std::string("config: ") + e.what());
        }
        *out = new fn_config{forestnav::mission_config_from_json(j)};
      },
      FN_ERROR_CONFIG);
}

fn_status fn_config_save(const fn_config* config, const char* path) {
  if (!config || !path) return fail(FN_ERROR_INVALID_ARGUMENT, "fn_config_save: null argument");
  return guarded([&] {
    std::ofstream outf(path);
    if (!outf) throw std::runtime_error(std::string("cannot open ") + path + " for writing");
    outf << forestnav::mission_config_to_json(config->cfg).dump(2) << "\n";
  });
}

fn_status fn_config_set_seed(fn_config* config, uint64_t seed) {
  if (!config) return fail(FN_ERROR_INVALID_ARGUMENT, "fn_config_set_seed: null config");
  config->cfg.seed = seed;
  config->cfg.world.seed = seed + 1;
  config->cfg.estimator.seed = seed + 2;
  config->cfg.planner.seed = seed + 3;
  t_last_error.clear();
  return FN_OK;
}

uint64_t fn_config_seed(const fn_config* config) { return config ? config->cfg.seed : 0; }

fn_status fn_config_set_loop_closures(fn_config* config, int enabled) {
  if (!config) return fail(FN_ERROR_INVALID_ARGUMENT, "fn_config_set_loop_closures: null config");
  config->cfg.estimator.loop_closure_enabled = enabled != 0;
  t_last_error.clear();
  return FN_OK;
}

fn_status fn_config_set_pattern(fn_config* config, const char* name) {
  if (!config || !name) {
    return fail(FN_ERROR_INVALID_ARGUMENT, "fn_config_set_pattern: null argument");
  }
  const std::string n(name);
  if (n == "lawnmower") {
    config->cfg.pattern = forestnav::MissionPattern::Lawnmower;
  } else if (n == "modified" || n == "modified_lawnmower") {
    config->cfg.pattern = forestnav::MissionPattern::ModifiedLawnmower;
  } else {
    return fail(FN_ERROR_INVALID_ARGUMENT,
                "fn_config_set_pattern: expected \"lawnmower\" or \"modified\"");
  }
  t_last_error.clear();
  return FN_OK;
}

fn_status fn_config_set_ground_truth_fusion(fn_config* config, int enabled) {
  if (!config) {
    return fail(FN_ERROR_INVALID_ARGUMENT, "fn_config_set_ground_truth_fusion: null config");
  }
  config->cfg.fuse_ground_truth = enabled != 0;
  t_last_error.clear();
  return FN_OK;
}

void fn_config_destroy(fn_config* config) { delete config; }

fn_status fn_mission_run(const fn_config* config, fn_mission** out) {
  if (!config || !out) return fail(FN_ERROR_INVALID_ARGUMENT, "fn_mission_run: null argument");
  *out = nullptr;
  return guarded([&] { *out = new fn_mission{forestnav::run_mission(config->cfg)}; },
                 FN_ERROR_CONFIG, FN_ERROR_INTERNAL);
}

int fn_mission_completed(const fn_mission* m) { return m && m->log.completed ? 1 : 0; }
int fn_mission_collided(const fn_mission* m) { return m && m->log.collided ? 1 : 0; }
int fn_mission_planner_aborted(const fn_mission* m) {
  return m && m->log.planner_aborted ? 1 : 0;
}
const char* fn_mission_abort_reason(const fn_mission* m) {
  return m ? m->log.abort_reason.c_str() : "";
}
int fn_mission_loop_closures(const fn_mission* m) { return m ? m->log.loop_closures : 0; }
int fn_mission_goals_reached(const fn_mission* m) { return m ? m->log.goals_reached : 0; }
int fn_mission_goals_total(const fn_mission* m) { return m ? m->log.goals_total : 0; }
double fn_mission_distance_m(const fn_mission* m) {
  return m ? m->log.distance_traveled_m : 0.0;
}
double fn_mission_duration_s(const fn_mission* m) { return m ? m->log.final_time_s : 0.0; }
size_t fn_mission_tick_count(const fn_mission* m) { return m ? m->log.ticks.size() : 0; }

fn_status fn_mission_write_artifacts(const fn_mission* mission, const fn_config* config,
                                     const char* dir) {
  if (!mission || !config || !dir) {
    return fail(FN_ERROR_INVALID_ARGUMENT, "fn_mission_write_artifacts: null argument");
  }
  return guarded([&] { forestnav::write_mission_log(mission->log, config->cfg, dir); });
}

void fn_mission_destroy(fn_mission* mission) { delete mission; }

fn_status fn_write_world_artifacts(const fn_config* config, const char* dir) {
  if (!config || !dir) {
    return fail(FN_ERROR_INVALID_ARGUMENT, "fn_write_world_artifacts: null argument");
  }
  return guarded([&] {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const forestnav::ForestWorld world = forestnav::ForestWorld::generate(config->cfg.world);
    world.save_json((fs::path(dir) / "world.json").string());
    forestnav::mission_ground_truth_mesh(config->cfg, world, config->cfg.mapping.resolution_m)
        .save_ply((fs::path(dir) / "ground_truth.ply").string());
  });
}

fn_status fn_evaluate_run(const char* run_dir, const char* metrics_path) {
  if (!run_dir || !metrics_path) {
    return fail(FN_ERROR_INVALID_ARGUMENT, "fn_evaluate_run: null argument");
  }
  return guarded(
      [&] {
        namespace fs = std::filesystem;
        const fs::path root(run_dir);
        const forestnav::MissionConfig cfg =
            forestnav::mission_config_from_json(load_json_file(root / "config.json"));
        const forestnav::MissionLog log = forestnav::read_mission_log(run_dir);
        const forestnav::TriangleMesh recon =
            forestnav::TriangleMesh::load_ply((root / "reconstruction.ply").string());
        const forestnav::ForestWorld world = forestnav::ForestWorld::generate(cfg.world);
        const forestnav::TriangleMesh gt =
            forestnav::mission_ground_truth_mesh(cfg, world, cfg.mapping.resolution_m);

        json out = forestnav::reconstruction_metrics_to_json(
            forestnav::evaluate_reconstruction(recon, gt, world));
        out["tau_m"] = 0.5;
        out["trajectory"] = forestnav::trajectory_stats_to_json(forestnav::trajectory_stats(log));

        std::ofstream outf(metrics_path);
        if (!outf) {
          throw std::runtime_error(std::string("cannot open ") + metrics_path + " for writing");
        }
        outf << out.dump(2) << "\n";
      },
      FN_ERROR_CONFIG);
}

fn_status fn_compare_modes(const fn_config* config, const char* dir, int* any_collided,
                           int* any_aborted) {
  if (!config || !dir) {
    return fail(FN_ERROR_INVALID_ARGUMENT, "fn_compare_modes: null argument");
  }
  return guarded(
      [&] {
        namespace fs = std::filesystem;
        fs::create_directories(dir);
        const forestnav::ComparisonReport rep = forestnav::compare_slam_vio(config->cfg);
        {
          std::ofstream outf(fs::path(dir) / "comparison.json");
          if (!outf) throw std::runtime_error("cannot open comparison.json for writing");
          outf << forestnav::comparison_report_to_json(rep).dump(2) << "\n";
        }
        {
          std::ofstream outf(fs::path(dir) / "comparison.txt");
          if (!outf) throw std::runtime_error("cannot open comparison.txt for writing");
          outf << forestnav::comparison_report_table(rep);
        }
        if (any_collided) *any_collided = rep.slam.collided || rep.vio.collided ? 1 : 0;
        if (any_aborted) {
          *any_aborted = rep.slam.planner_aborted || rep.vio.planner_aborted ? 1 : 0;
        }
      },
      FN_ERROR_CONFIG, FN_ERROR_INTERNAL);
}

}  // extern "C"
