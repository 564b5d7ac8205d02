#ifndef DUALMARKET_H
#define DUALMARKET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define DM_OK 0

#define DM_ERR_NULL 1

#define DM_ERR_UTF8 2

#define DM_ERR_CONFIG 3

/**
 * Parameter outside its valid domain.
 */
#define DM_ERR_DOMAIN 4

/**
 * Root finding, inversion or iteration failed.
 */
#define DM_ERR_NUMERIC 5

#define DM_ERR_IO 6

#define DM_ERR_INDEX 7

#define DM_ERR_PANIC 8

#define DM_REGIME_BLIND 1

#define DM_REGIME_STATDISC 2

/**
 * Opaque scenario handle.
 */
typedef struct DmScenario DmScenario;

/**
 * Opaque handle to a completed deterministic run.
 */
typedef struct DmTrajectory DmTrajectory;

typedef struct DmSteadyState {
  int32_t converged;
  /**
   * First converged step, or -1.
   */
  int64_t t_convergence;
  uint64_t steps;
  double g_b;
  double g_w;
  double pi_b;
  double pi_w;
  double w;
  int32_t symmetric;
  double empirical_lipschitz;
  double residual;
} DmSteadyState;

/**
 * One trajectory period; `*_b` / `*_w` are the two groups.
 */
typedef struct DmRow {
  uint64_t t;
  double g_b;
  double g_w;
  double pi_b;
  double pi_w;
  double gamma_b;
  double gamma_w;
  double w;
  double eta_hat_b;
  double eta_hat_w;
  double k_b;
} DmRow;

typedef struct DmVerdict {
  int32_t applicable;
  int32_t ordering_holds;
  int32_t dominates;
  double theta_tilde_w;
  double theta_bar;
  double theta_tilde_b;
  double theta_hat_q;
  double group_b_better_off_mass;
  double group_w_worse_off_mass;
} DmVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *dm_last_error_message(void);

/**
 * Creates a scenario with default parameters.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
int32_t dm_scenario_new(struct DmScenario **out);

/**
 * Parses scenario text (`key = value` lines).
 *
 * # Safety
 * `text` must be null or a nul-terminated string; `out` null or writable.
 */
int32_t dm_scenario_from_str(const char *text, struct DmScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` must be null or a nul-terminated string; `out` null or writable.
 */
int32_t dm_scenario_load(const char *path, struct DmScenario **out);

/**
 * Sets one key; the scenario is unchanged if the result would be invalid.
 *
 * # Safety
 * `s` must be null or a live handle; `key` and `value` null or
 * nul-terminated.
 */
int32_t dm_scenario_set(struct DmScenario *s, const char *key, const char *value);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 * `s` must be null or a handle not yet freed.
 */
void dm_scenario_free(struct DmScenario *s);

/**
 * Iterates the scenario's regime to its steady state. Non-convergence is
 * reported through `converged`, not as an error.
 *
 * # Safety
 * `s` must be null or a live handle; `out` null or writable.
 */
int32_t dm_run_steady_state(const struct DmScenario *s, struct DmSteadyState *out);

/**
 * Runs the scenario and keeps every period.
 *
 * # Safety
 * `s` must be null or a live handle; `out` null or writable.
 */
int32_t dm_trajectory_run(const struct DmScenario *s, struct DmTrajectory **out);

/**
 * Number of periods; 0 for null.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t dm_trajectory_len(const struct DmTrajectory *t);

/**
 * Copies period `index` into `out`.
 *
 * # Safety
 * `t` must be null or a live handle; `out` null or writable.
 */
int32_t dm_trajectory_row(const struct DmTrajectory *t, size_t index, struct DmRow *out);

/**
 * Steady-state summary of a finished trajectory.
 *
 * # Safety
 * `t` must be null or a live handle; `out` null or writable.
 */
int32_t dm_trajectory_report(const struct DmTrajectory *t, struct DmSteadyState *out);

/**
 * Releases a trajectory. Null is ignored.
 *
 * # Safety
 * `t` must be null or a handle not yet freed.
 */
void dm_trajectory_free(struct DmTrajectory *t);

/**
 * Compares parity against `DM_REGIME_BLIND` or `DM_REGIME_STATDISC` on the
 * scenario's parameters.
 *
 * # Safety
 * `s` must be null or a live handle; `out` null or writable.
 */
int32_t dm_compare(const struct DmScenario *s, int32_t regime, struct DmVerdict *out);

/**
 * Forgiveness buffer after `t` observed periods with constant `c`.
 *
 * # Safety
 * `out` must be null or writable.
 */
int32_t dm_delta(uint32_t t, double c, double *out);

/**
 * Wage offered when a share `g` of the population is good workers.
 *
 * # Safety
 * `s` must be null or a live handle; `out` null or writable.
 */
int32_t dm_wage(const struct DmScenario *s, double g, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALMARKET_H */
