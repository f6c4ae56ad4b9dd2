#ifndef RPS_H
#define RPS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RpsStatus {
  RPS_STATUS_OK = 0,
  RPS_STATUS_NULL_POINTER = 1,
  RPS_STATUS_INVALID_ARGUMENT = 2,
  RPS_STATUS_CONFIG = 3,
  RPS_STATUS_USAGE = 4,
  RPS_STATUS_IO = 5,
  RPS_STATUS_CHECKPOINT = 6,
  RPS_STATUS_SCHEMA = 7,
  RPS_STATUS_PARSE = 8,
  RPS_STATUS_INSUFFICIENT_DATA = 9,
  RPS_STATUS_NOT_YET_ESTIMABLE = 10,
  RPS_STATUS_PROVIDER = 11,
  RPS_STATUS_DIVERGED = 12,
  RPS_STATUS_PANIC = 13,
} RpsStatus;

/**
 * Saved DDPG policy.
 */
typedef struct RpsDdpg RpsDdpg;

/**
 * Saved DQN policy.
 */
typedef struct RpsDqn RpsDqn;

/**
 * GMM elicitation environment with its own random stream.
 */
typedef struct RpsGmmEnv RpsGmmEnv;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *rps_last_error_message(void);

const char *rps_version(void);

/**
 * Creates an environment with default settings. `horizon` 0 keeps the default.
 *
 * # Safety
 * `out_env` must be a valid pointer; the handle is released with [`rps_gmm_env_free`].
 */
enum RpsStatus rps_gmm_env_new(bool biased,
                               size_t horizon,
                               uint64_t seed,
                               struct RpsGmmEnv **out_env);

/**
 * # Safety
 * `env` must come from [`rps_gmm_env_new`] and not be used afterwards. Null is ignored.
 */
void rps_gmm_env_free(struct RpsGmmEnv *env);

/**
 * # Safety
 * `env` must be a live handle or null.
 */
size_t rps_gmm_env_observation_dim(const struct RpsGmmEnv *env);

/**
 * Starts an episode and writes the initial observation.
 *
 * # Safety
 * `env` must be live; `obs` must hold `obs_cap` doubles; `obs_len` may be null.
 */
enum RpsStatus rps_gmm_env_reset(struct RpsGmmEnv *env,
                                 double *obs,
                                 size_t obs_cap,
                                 size_t *obs_len);

/**
 * Takes one step. `distance` receives NaN while the estimate is still warming up.
 *
 * # Safety
 * `env` must be live; `obs` must hold `obs_cap` doubles; the scalar outputs may be null.
 */
enum RpsStatus rps_gmm_env_step(struct RpsGmmEnv *env,
                                double action,
                                double *obs,
                                size_t obs_cap,
                                double *reward,
                                bool *done,
                                double *distance);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out_agent` a valid pointer.
 */
enum RpsStatus rps_ddpg_load(const char *path, size_t state_dim, struct RpsDdpg **out_agent);

/**
 * Deterministic action for `obs`.
 *
 * # Safety
 * `agent` must be live and `obs` must hold `len` doubles.
 */
enum RpsStatus rps_ddpg_act(const struct RpsDdpg *agent,
                            const double *obs,
                            size_t len,
                            double *action);

/**
 * # Safety
 * `agent` must come from [`rps_ddpg_load`] and not be used afterwards. Null is ignored.
 */
void rps_ddpg_free(struct RpsDdpg *agent);

/**
 * Loads a dialogue-track DQN checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_agent` a valid pointer.
 */
enum RpsStatus rps_dqn_load(const char *path, struct RpsDqn **out_agent);

/**
 * Greedy strategy index for `obs`.
 *
 * # Safety
 * `agent` must be live and `obs` must hold `len` doubles.
 */
enum RpsStatus rps_dqn_greedy(const struct RpsDqn *agent,
                              const double *obs,
                              size_t len,
                              uint32_t *action);

/**
 * # Safety
 * `agent` must come from [`rps_dqn_load`] and not be used afterwards. Null is ignored.
 */
void rps_dqn_free(struct RpsDqn *agent);

/**
 * Matched-component KL distance between two `k`-component mixtures given as parallel arrays.
 *
 * # Safety
 * Each array must hold `k` doubles; `distance` must be a valid pointer.
 */
enum RpsStatus rps_mixture_distance(size_t k,
                                    const double *est_weights,
                                    const double *est_means,
                                    const double *est_variances,
                                    const double *true_weights,
                                    const double *true_means,
                                    const double *true_variances,
                                    double *distance);

/**
 * Cosine similarity of two texts under the built-in hashed n-gram embedder.
 *
 * # Safety
 * `a` and `b` must be NUL-terminated strings; `similarity` must be a valid pointer.
 */
enum RpsStatus rps_text_similarity(const char *a, const char *b, double *similarity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RPS_H */
