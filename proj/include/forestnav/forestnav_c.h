/* C interface to the forestnav simulation library.
 *
 * Every function returns an fn_status; on any failure fn_last_error() holds
 * a message for the calling thread. Handles are opaque and must be released
 * with their destroy function exactly once.
 */
#ifndef FORESTNAV_C_H
#define FORESTNAV_C_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fn_status {
  FN_OK = 0,
  FN_ERROR_INVALID_ARGUMENT = 1,
  FN_ERROR_CONFIG = 2,
  FN_ERROR_PLANNER_ABORT = 3,
  FN_ERROR_COLLISION = 4,
  FN_ERROR_IO = 5,
  FN_ERROR_INTERNAL = 6
} fn_status;

/* Library name and version, e.g. "forestnav 0.1.0". */
const char* fn_version(void);

/* Message of the last failed call on this thread; "" when the last call
 * succeeded. The pointer stays valid until the next call on this thread. */
const char* fn_last_error(void);

/* ---------------------------------------------------------------- config */

typedef struct fn_config fn_config;

/* Built-in defaults (lawnmower pattern in a random 128 m forest). */
fn_status fn_config_default(fn_config** out);
/* Parse a JSON config file / string. Unknown or ill-typed keys fail with
 * FN_ERROR_CONFIG and an error naming the key path. */
fn_status fn_config_load(const char* path, fn_config** out);
fn_status fn_config_parse(const char* json_text, fn_config** out);
fn_status fn_config_save(const fn_config* config, const char* path);

/* Reseeds the whole run: the master seed plus the world, estimator and
 * planner streams (offset so the streams stay distinct). */
fn_status fn_config_set_seed(fn_config* config, uint64_t seed);
uint64_t fn_config_seed(const fn_config* config);
/* enabled != 0 -> loop closures on (SLAM mode), 0 -> off (VIO mode). */
fn_status fn_config_set_loop_closures(fn_config* config, int enabled);
/* "lawnmower", "modified" (accepts "modified_lawnmower"). */
fn_status fn_config_set_pattern(fn_config* config, const char* name);
/* Also fuse the depth stream at ground-truth poses (baseline maps). */
fn_status fn_config_set_ground_truth_fusion(fn_config* config, int enabled);

void fn_config_destroy(fn_config* config);

/* --------------------------------------------------------------- mission */

typedef struct fn_mission fn_mission;

/* Runs the full closed-loop mission. Returns FN_OK whenever the mission ran
 * to a verdict, including collisions and aborts; inspect the accessors.
 * FN_ERROR_CONFIG when the config fails validation. */
fn_status fn_mission_run(const fn_config* config, fn_mission** out);

int fn_mission_completed(const fn_mission* mission);
int fn_mission_collided(const fn_mission* mission);
int fn_mission_planner_aborted(const fn_mission* mission);
/* "" when the mission completed normally. */
const char* fn_mission_abort_reason(const fn_mission* mission);
int fn_mission_loop_closures(const fn_mission* mission);
int fn_mission_goals_reached(const fn_mission* mission);
int fn_mission_goals_total(const fn_mission* mission);
double fn_mission_distance_m(const fn_mission* mission);
double fn_mission_duration_s(const fn_mission* mission);
size_t fn_mission_tick_count(const fn_mission* mission);

/* Writes config.json, ticks.csv, plans.csv, deformations.csv, summary.json
 * and reconstruction.ply under dir (created if missing). */
fn_status fn_mission_write_artifacts(const fn_mission* mission, const fn_config* config,
                                     const char* dir);

void fn_mission_destroy(fn_mission* mission);

/* ------------------------------------------------------------ evaluation */

/* Writes world.json and ground_truth.ply (the mission-region ground-truth
 * mesh) under dir for the world this config generates. */
fn_status fn_write_world_artifacts(const fn_config* config, const char* dir);

/* Reads a run directory produced by fn_mission_write_artifacts and writes
 * reconstruction accuracy/completeness plus trajectory statistics as JSON
 * to metrics_path. Pure function of the artifacts: reruns are identical. */
fn_status fn_evaluate_run(const char* run_dir, const char* metrics_path);

/* Runs the mission twice (loop closures on/off) plus ground-truth-pose
 * fusion baselines and writes comparison.json and comparison.txt under dir.
 * any_collided / any_aborted (nullable) report whether either run collided
 * or aborted. */
fn_status fn_compare_modes(const fn_config* config, const char* dir, int* any_collided,
                           int* any_aborted);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FORESTNAV_C_H */
