#ifndef DIIQN_H
#define DIIQN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum DiiqnStatus {
  DIIQN_STATUS_OK = 0,
  DIIQN_STATUS_NULL_POINTER = 1,
  DIIQN_STATUS_INVALID_ARGUMENT = 2,
  DIIQN_STATUS_CONFIG = 3,
  DIIQN_STATUS_IO = 4,
  DIIQN_STATUS_ENVIRONMENT = 5,
  DIIQN_STATUS_NETWORK = 6,
  DIIQN_STATUS_DATASET = 7,
  DIIQN_STATUS_TRAINING = 8,
  DIIQN_STATUS_PANIC = 9,
} DiiqnStatus;

/**
 * Which action set an environment handle acts with.
 */
typedef enum DiiqnRole {
  DIIQN_ROLE_AGENT = 0,
  DIIQN_ROLE_EXPERT = 1,
} DiiqnRole;

/**
 * Opaque expert dataset handle.
 */
typedef struct DiiqnDataset DiiqnDataset;

/**
 * Opaque environment handle.
 */
typedef struct DiiqnEnv DiiqnEnv;

/**
 * Opaque Q-network handle.
 */
typedef struct DiiqnNetwork DiiqnNetwork;

/**
 * Headline numbers of a training run.
 */
typedef struct DiiqnTrainSummary {
  uint64_t steps;
  /**
   * -1 when the run never converged.
   */
  int64_t convergence_step;
  float final_return;
  float final_normalized;
  float final_success_rate;
} DiiqnTrainSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call on this thread.
 */
const char *diiqn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *diiqn_version(void);

/**
 * Build an environment from run-config TOML text.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DiiqnStatus diiqn_env_new(const char *config_toml,
                               enum DiiqnRole role,
                               uint64_t seed,
                               struct DiiqnEnv **out);

/**
 * # Safety
 * `env` must come from [`diiqn_env_new`] and not be used afterwards.
 */
void diiqn_env_free(struct DiiqnEnv *env);

/**
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum DiiqnStatus diiqn_env_dims(const struct DiiqnEnv *env, size_t *state_dim, size_t *num_actions);

/**
 * Start an episode and write the initial state into `state`.
 *
 * # Safety
 * `state` must point to `len` writable floats.
 */
enum DiiqnStatus diiqn_env_reset(struct DiiqnEnv *env, float *state, size_t len);

/**
 * Apply `action`, writing the next state, reward and terminal flag.
 *
 * # Safety
 * `state` must point to `len` writable floats; `reward` and `done` must be
 * valid pointers.
 */
enum DiiqnStatus diiqn_env_step(struct DiiqnEnv *env,
                                size_t action,
                                float *state,
                                size_t len,
                                float *reward,
                                bool *done);

/**
 * Load a network checkpoint written by `diiqn train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DiiqnStatus diiqn_network_load(const char *path, struct DiiqnNetwork **out);

/**
 * # Safety
 * `net` must come from [`diiqn_network_load`] and not be used afterwards.
 */
void diiqn_network_free(struct DiiqnNetwork *net);

/**
 * # Safety
 * `net` must be a live handle; the out pointers must be valid.
 */
enum DiiqnStatus diiqn_network_dims(const struct DiiqnNetwork *net,
                                    size_t *input_dim,
                                    size_t *num_actions);

/**
 * Q-values of one state.
 *
 * # Safety
 * `state` must point to `state_len` floats and `q` to `q_len` writable floats.
 */
enum DiiqnStatus diiqn_network_forward(const struct DiiqnNetwork *net,
                                       const float *state,
                                       size_t state_len,
                                       float *q,
                                       size_t q_len);

/**
 * Load an expert dataset file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DiiqnStatus diiqn_dataset_load(const char *path, struct DiiqnDataset **out);

/**
 * # Safety
 * `ds` must come from [`diiqn_dataset_load`] and not be used afterwards.
 */
void diiqn_dataset_free(struct DiiqnDataset *ds);

/**
 * Record count, state length and number of distinct experts.
 *
 * # Safety
 * `ds` must be a live handle; the out pointers must be valid.
 */
enum DiiqnStatus diiqn_dataset_info(const struct DiiqnDataset *ds,
                                    size_t *records,
                                    size_t *state_dim,
                                    size_t *experts);

/**
 * Copy record `index` into `s` and `s_next`.
 *
 * # Safety
 * `s` and `s_next` must each point to `len` writable floats.
 */
enum DiiqnStatus diiqn_dataset_record(const struct DiiqnDataset *ds,
                                      size_t index,
                                      float *s,
                                      float *s_next,
                                      size_t len);

/**
 * Train from run-config TOML text and write the run files into `out_dir`,
 * exactly as `diiqn train` does. A relative `dataset` path is resolved
 * against the working directory.
 *
 * # Safety
 * `config_toml` and `out_dir` must be NUL-terminated strings; `summary`
 * may be null.
 */
enum DiiqnStatus diiqn_train(const char *config_toml,
                             const char *out_dir,
                             struct DiiqnTrainSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIIQN_H */
