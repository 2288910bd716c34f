// Command-line front end; drives the library exclusively through the C API.
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "forestnav/forestnav_c.h"

namespace {

using nlohmann::json;

std::string iso_now() {
  const std::time_t tt = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int exit_code_for(fn_status s) {
  switch (s) {
    case FN_OK: return 0;
    case FN_ERROR_PLANNER_ABORT: return 3;
    case FN_ERROR_COLLISION: return 4;
    case FN_ERROR_INVALID_ARGUMENT:
    case FN_ERROR_CONFIG:
    case FN_ERROR_IO: return 2;
    default: return 1;
  }
}

int report_error(const char* what, fn_status s) {
  std::fprintf(stderr, "%s: %s\n", what, fn_last_error());
  return exit_code_for(s);
}

// Written with status "running" before the run and finalized afterwards, so
// a run directory always tells whether its producer finished.
class Manifest {
 public:
  Manifest(const std::filesystem::path& dir, json fields)
      : path_(dir / "manifest.json"), j_(std::move(fields)),
        start_(std::chrono::steady_clock::now()) {
    std::filesystem::create_directories(dir);
    j_["tool"] = fn_version();
    j_["started"] = iso_now();
    j_["status"] = "running";
    write();
  }

  void finish(const std::string& status) {
    j_["status"] = status;
    j_["finished"] = iso_now();
    j_["duration_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write();
  }

 private:
  void write() const {
    std::ofstream out(path_);
    out << j_.dump(2) << "\n";
  }

  std::filesystem::path path_;
  json j_;
  std::chrono::steady_clock::time_point start_;
};

struct ConfigHandle {
  fn_config* p = nullptr;
  ~ConfigHandle() { fn_config_destroy(p); }
};

struct MissionHandle {
  fn_mission* p = nullptr;
  ~MissionHandle() { fn_mission_destroy(p); }
};

int load_config(const std::string& path, uint64_t* seed, const std::string& mode,
                const std::string& pattern, ConfigHandle& cfg) {
  fn_status s = fn_config_load(path.c_str(), &cfg.p);
  if (s != FN_OK) return report_error("error", s);
  if (seed) {
    if ((s = fn_config_set_seed(cfg.p, *seed)) != FN_OK) return report_error("seed", s);
  }
  if (!mode.empty()) {
    if ((s = fn_config_set_loop_closures(cfg.p, mode == "slam" ? 1 : 0)) != FN_OK) {
      return report_error("mode", s);
    }
  }
  if (!pattern.empty()) {
    if ((s = fn_config_set_pattern(cfg.p, pattern.c_str())) != FN_OK) {
      return report_error("pattern", s);
    }
  }
  return -1;  // loaded
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, uint64_t* seed,
                 const std::string& mode, const std::string& pattern) {
  ConfigHandle cfg;
  if (const int rc = load_config(config_path, seed, mode, pattern, cfg); rc >= 0) return rc;

  Manifest manifest(out_dir, json{{"command", "simulate"},
                                  {"config", config_path},
                                  {"seed", fn_config_seed(cfg.p)},
                                  {"mode", mode.empty() ? "config" : mode},
                                  {"pattern", pattern.empty() ? "config" : pattern},
                                  {"out", out_dir}});

  MissionHandle mission;
  fn_status s = fn_mission_run(cfg.p, &mission.p);
  if (s != FN_OK) {
    manifest.finish("error");
    return report_error("simulate", s);
  }

  if ((s = fn_mission_write_artifacts(mission.p, cfg.p, out_dir.c_str())) != FN_OK ||
      (s = fn_write_world_artifacts(cfg.p, out_dir.c_str())) != FN_OK) {
    manifest.finish("error");
    return report_error("artifacts", s);
  }

  const bool collided = fn_mission_collided(mission.p) != 0;
  const bool aborted = fn_mission_planner_aborted(mission.p) != 0;
  const bool completed = fn_mission_completed(mission.p) != 0;
  std::printf("%s: goals %d/%d, %.1f m in %.1f s, %d loop closures, %zu ticks\n",
              completed ? "completed" : fn_mission_abort_reason(mission.p),
              fn_mission_goals_reached(mission.p), fn_mission_goals_total(mission.p),
              fn_mission_distance_m(mission.p), fn_mission_duration_s(mission.p),
              fn_mission_loop_closures(mission.p), fn_mission_tick_count(mission.p));

  manifest.finish(completed   ? "completed"
                  : collided  ? "collision"
                  : aborted   ? "planner_abort"
                              : "incomplete");
  if (collided) return 4;
  if (aborted) return 3;
  return 0;
}

int cmd_evaluate(const std::string& run_dir, std::string out_path) {
  if (out_path.empty()) {
    out_path = (std::filesystem::path(run_dir) / "metrics.json").string();
  }
  const fn_status s = fn_evaluate_run(run_dir.c_str(), out_path.c_str());
  if (s != FN_OK) return report_error("evaluate", s);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_compare(const std::string& config_path, const std::string& out_dir, uint64_t* seed,
                const std::string& pattern) {
  ConfigHandle cfg;
  if (const int rc = load_config(config_path, seed, "", pattern, cfg); rc >= 0) return rc;

  Manifest manifest(out_dir, json{{"command", "compare"},
                                  {"config", config_path},
                                  {"seed", fn_config_seed(cfg.p)},
                                  {"pattern", pattern.empty() ? "config" : pattern},
                                  {"out", out_dir}});

  int collided = 0;
  int aborted = 0;
  const fn_status s = fn_compare_modes(cfg.p, out_dir.c_str(), &collided, &aborted);
  if (s != FN_OK) {
    manifest.finish("error");
    return report_error("compare", s);
  }

  std::ifstream table(std::filesystem::path(out_dir) / "comparison.txt");
  std::printf("%s", std::string(std::istreambuf_iterator<char>(table), {}).c_str());

  manifest.finish(collided ? "collision" : aborted ? "planner_abort" : "completed");
  if (collided) return 4;
  if (aborted) return 3;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(fn_version()) +
               " — vision-only under-canopy MAV navigation simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out;
  std::string run_dir;
  std::string mode;
  std::string pattern;
  uint64_t seed = 0;

  CLI::App* sim = app.add_subcommand("simulate", "run one mission and write its artifacts");
  sim->add_option("--config", config_path, "mission config JSON")->required();
  sim->add_option("--out", out, "output directory")->required();
  CLI::Option* sim_seed = sim->add_option("--seed", seed, "override the config seed");
  sim->add_option("--mode", mode, "estimator mode")
      ->check(CLI::IsMember({"slam", "vio"}));
  sim->add_option("--pattern", pattern, "mission pattern")
      ->check(CLI::IsMember({"lawnmower", "modified"}));

  CLI::App* eval = app.add_subcommand("evaluate", "score a finished run directory");
  eval->add_option("--run", run_dir, "directory written by simulate")->required();
  eval->add_option("--out", out, "metrics JSON path (default <run>/metrics.json)");

  CLI::App* cmp = app.add_subcommand("compare",
                                     "run the mission with loop closures on and off");
  cmp->add_option("--config", config_path, "mission config JSON")->required();
  cmp->add_option("--out", out, "output directory")->required();
  CLI::Option* cmp_seed = cmp->add_option("--seed", seed, "override the config seed");
  cmp->add_option("--pattern", pattern, "mission pattern")
      ->check(CLI::IsMember({"lawnmower", "modified"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (sim->parsed()) {
    return cmd_simulate(config_path, out, sim_seed->count() ? &seed : nullptr, mode, pattern);
  }
  if (eval->parsed()) {
    return cmd_evaluate(run_dir, out);
  }
  return cmd_compare(config_path, out, cmp_seed->count() ? &seed : nullptr, pattern);
}
