#ifndef MIR3_H
#define MIR3_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Mir3Status {
  MIR3_STATUS_OK = 0,
  MIR3_STATUS_NULL_POINTER = 1,
  MIR3_STATUS_INVALID_ARGUMENT = 2,
  MIR3_STATUS_CONFIG = 3,
  MIR3_STATUS_MISSING_ARTIFACT = 4,
  MIR3_STATUS_NUMERICAL_FAILURE = 5,
  MIR3_STATUS_IO = 6,
  MIR3_STATUS_INTERNAL = 7,
} Mir3Status;

/**
 * Run configuration.
 */
typedef struct Mir3Config Mir3Config;

/**
 * Rendezvous environment.
 */
typedef struct Mir3Env Mir3Env;

/**
 * Deterministic defender actors.
 */
typedef struct Mir3Policy Mir3Policy;

/**
 * Defender trainer.
 */
typedef struct Mir3Trainer Mir3Trainer;

typedef struct Mir3EpochMetrics {
  uint64_t epoch;
  uint64_t env_steps;
  double episode_return;
  /**
   * NaN when not computed.
   */
  double mi_total;
  /**
   * NaN before the first update.
   */
  double critic_loss;
  /**
   * NaN before the first update.
   */
  double actor_loss;
  double wall_time_s;
} Mir3EpochMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *mir3_last_error(void);

/**
 * Defaults of the rendezvous tables.
 */
struct Mir3Config *mir3_config_default(void);

/**
 * Parses a TOML document.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum Mir3Status mir3_config_from_toml(const char *toml, struct Mir3Config **out);

/**
 * Applies one `section.key=value` override in place.
 *
 * # Safety
 * `cfg` must come from this library; `assignment` must be NUL-terminated.
 */
enum Mir3Status mir3_config_set(struct Mir3Config *cfg, const char *assignment);

/**
 * Serializes the config as TOML. Release the string with
 * [`mir3_string_free`].
 *
 * # Safety
 * `cfg` must come from this library and `out` be a valid pointer.
 */
enum Mir3Status mir3_config_to_toml(const struct Mir3Config *cfg, char **out);

/**
 * # Safety
 * `cfg` must come from this library or be null.
 */
void mir3_config_free(struct Mir3Config *cfg);

/**
 * # Safety
 * `s` must be a string returned by this library or null.
 */
void mir3_string_free(char *s);

/**
 * # Safety
 * `cfg` must come from this library and `out` be a valid pointer.
 */
enum Mir3Status mir3_trainer_new(const struct Mir3Config *cfg, struct Mir3Trainer **out);

/**
 * Runs one training epoch.
 *
 * # Safety
 * `trainer` must come from this library; `metrics` may be null.
 */
enum Mir3Status mir3_trainer_train_epoch(struct Mir3Trainer *trainer,
                                         struct Mir3EpochMetrics *metrics);

/**
 * Non-zero once `train.total_timesteps` have been consumed.
 *
 * # Safety
 * `trainer` must come from this library.
 */
int32_t mir3_trainer_is_finished(const struct Mir3Trainer *trainer);

/**
 * Writes the trainer's networks as a checkpoint file.
 *
 * # Safety
 * `trainer` must come from this library; `path` must be NUL-terminated.
 */
enum Mir3Status mir3_trainer_save(const struct Mir3Trainer *trainer, const char *path);

/**
 * Copies the noise-free defender policy out of a trainer.
 *
 * # Safety
 * `trainer` must come from this library and `out` be a valid pointer.
 */
enum Mir3Status mir3_trainer_policy(const struct Mir3Trainer *trainer, struct Mir3Policy **out);

/**
 * # Safety
 * `trainer` must come from this library or be null.
 */
void mir3_trainer_free(struct Mir3Trainer *trainer);

/**
 * Loads defender actors from a checkpoint written for `cfg`.
 *
 * # Safety
 * `cfg` must come from this library, `path` be NUL-terminated and `out` a
 * valid pointer.
 */
enum Mir3Status mir3_policy_load(const struct Mir3Config *cfg,
                                 const char *path,
                                 struct Mir3Policy **out);

/**
 * Length of one agent's history input (`history_window * obs_dim`).
 *
 * # Safety
 * `policy` must come from this library.
 */
size_t mir3_policy_history_len(const struct Mir3Policy *policy);

/**
 * Action of `agent` for a flattened history (oldest observation first).
 *
 * # Safety
 * `history` must hold `history_len` values and `action_out` two.
 */
enum Mir3Status mir3_policy_act(const struct Mir3Policy *policy,
                                size_t agent,
                                const double *history,
                                size_t history_len,
                                double *action_out);

/**
 * # Safety
 * `policy` must come from this library or be null.
 */
void mir3_policy_free(struct Mir3Policy *policy);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum Mir3Status mir3_env_new(size_t n_agents,
                             double v_max,
                             size_t max_episode_len,
                             struct Mir3Env **out);

/**
 * Per-agent observation length.
 *
 * # Safety
 * `env` must come from this library.
 */
size_t mir3_env_obs_dim(const struct Mir3Env *env);

/**
 * Resets and writes the `n_agents * obs_dim` observations, agent-major.
 *
 * # Safety
 * `obs_out` must hold `obs_len` values.
 */
enum Mir3Status mir3_env_reset(struct Mir3Env *env, uint64_t seed, double *obs_out, size_t obs_len);

/**
 * Advances one step with `2 * n_agents` action values.
 *
 * # Safety
 * Buffers must hold the stated lengths; `reward` and `done` must be valid.
 */
enum Mir3Status mir3_env_step(struct Mir3Env *env,
                              const double *actions,
                              size_t actions_len,
                              double *obs_out,
                              size_t obs_len,
                              double *reward,
                              int32_t *done);

/**
 * # Safety
 * `env` must come from this library or be null.
 */
void mir3_env_free(struct Mir3Env *env);

/**
 * Normal-approximation interval `mean ± halfwidth` at `level`.
 *
 * # Safety
 * `samples` must hold `n` values; `mean` and `halfwidth` must be valid.
 */
enum Mir3Status mir3_confidence_interval(const double *samples,
                                         size_t n,
                                         double level,
                                         double *mean,
                                         double *halfwidth);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIR3_H */
