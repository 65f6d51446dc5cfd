/* C interface to the constrained-MDP library. Every function returns a
 * status code; on failure the thread-local message from cmdplab_last_error()
 * says why. Handles are opaque and owned by the caller. */
#ifndef CMDPLAB_H
#define CMDPLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CMDPLAB_API __declspec(dllexport)
#else
#define CMDPLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cmdplab_status {
  CMDPLAB_OK = 0,
  CMDPLAB_MALFORMED_PROBLEM,
  CMDPLAB_NUMERICAL_BREAKDOWN,
  CMDPLAB_SHAPE_MISMATCH,
  CMDPLAB_NOT_ERGODIC,
  CMDPLAB_SINGULAR_SYSTEM,
  CMDPLAB_MIXING_CAP,
  CMDPLAB_INFEASIBLE,
  CMDPLAB_CONFIG_INVALID,
  CMDPLAB_HORIZON_DEGENERATE,
  CMDPLAB_SCHEDULE_TOO_SHORT,
  CMDPLAB_IO,
  CMDPLAB_INVALID_ARGUMENT,
  CMDPLAB_INTERNAL
} cmdplab_status;

typedef struct cmdplab_model cmdplab_model;
typedef struct cmdplab_config cmdplab_config;

CMDPLAB_API const char* cmdplab_version(void);
CMDPLAB_API const char* cmdplab_status_name(cmdplab_status status);
/* Message of the last failure on this thread, prefixed with the status
 * name ("" after a success). */
CMDPLAB_API const char* cmdplab_last_error(void);

/* ---- models ---- */
CMDPLAB_API cmdplab_status cmdplab_model_queue(size_t buffer, cmdplab_model** out);
CMDPLAB_API cmdplab_status cmdplab_model_random(size_t states, size_t actions, size_t channels, double floor,
                                                uint64_t seed, cmdplab_model** out);
CMDPLAB_API cmdplab_status cmdplab_model_chain(size_t length, double p_forward, uint64_t seed, cmdplab_model** out);
CMDPLAB_API cmdplab_status cmdplab_model_load(const char* path, cmdplab_model** out);
CMDPLAB_API cmdplab_status cmdplab_model_save(const cmdplab_model* model, const char* path);
CMDPLAB_API void cmdplab_model_free(cmdplab_model* model);

CMDPLAB_API cmdplab_status cmdplab_model_shape(const cmdplab_model* model, size_t* states, size_t* actions,
                                               size_t* channels);
/* Factor from normalized to original units: channel 0 is the reward, k >= 1
 * is cost channel k-1. A negative factor encodes a sign flip. */
CMDPLAB_API cmdplab_status cmdplab_model_unit_scale(const cmdplab_model* model, size_t channel, double* scale);

/* ---- oracle solve ---- */
typedef struct cmdplab_solution {
  /* Long-run reward of the optimal stationary policy (normalized units). */
  double objective;
  /* Optional output arrays supplied by the caller; NULL to skip.
   * channel_values: num_channels long, long-run cost per channel.
   * occupancy: states*actions long, indexed [s*A + a]. */
  double* channel_values;
  double* occupancy;
} cmdplab_solution;

/* constrained = 0 drops the cost rows; channel values are still reported. */
CMDPLAB_API cmdplab_status cmdplab_solve(const cmdplab_model* model, int constrained, cmdplab_solution* out);

/* ---- invariant sweep ---- */
typedef struct cmdplab_check_report {
  int tables_ok;             /* shapes, ranges and row sums */
  int uniform_ergodic;       /* uniform policy induces an ergodic chain */
  int feasible;              /* constrained LP has a solution */
  double occupancy_residual; /* polytope violation of the LP optimum */
  double bellman_residual;   /* max over channels of the Bellman residual of the optimal policy */
} cmdplab_check_report;

/* Returns CMDPLAB_OK with the report filled in even when checks fail; a
 * table failure leaves the remaining fields at 0. */
CMDPLAB_API cmdplab_status cmdplab_model_check(const cmdplab_model* model, cmdplab_check_report* out);

/* ---- experiments ---- */
/* Config text in the line-oriented `key = value` format. */
CMDPLAB_API cmdplab_status cmdplab_config_parse(const char* text, cmdplab_config** out);
CMDPLAB_API cmdplab_status cmdplab_config_load(const char* path, cmdplab_config** out);
/* Overrides one key, validating the result. */
CMDPLAB_API cmdplab_status cmdplab_config_set(cmdplab_config* config, const char* key, const char* value);
CMDPLAB_API void cmdplab_config_free(cmdplab_config* config);

typedef struct cmdplab_run_summary {
  double oracle_gain;
  size_t replications;
  size_t failures;
  /* Means over successful replications at T (normalized units). */
  double mean_regret;
  double mean_reward_rate;
} cmdplab_run_summary;

/* Runs every replication and writes the output files. workers = 0 uses
 * CMDPLAB_WORKERS or the hardware concurrency. Replication failures are not
 * an error status; check summary->failures. */
CMDPLAB_API cmdplab_status cmdplab_run_experiment(const cmdplab_config* config, size_t workers,
                                                  cmdplab_run_summary* summary);

#ifdef __cplusplus
}
#endif

#endif
