#ifndef ETHOKIT_H
#define ETHOKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EthokitStatus {
  ETHOKIT_STATUS_OK = 0,
  ETHOKIT_STATUS_NULL_POINTER = 1,
  ETHOKIT_STATUS_INVALID_UTF8 = 2,
  ETHOKIT_STATUS_INVALID_ARGUMENT = 3,
  ETHOKIT_STATUS_IO = 4,
  ETHOKIT_STATUS_PARSE = 5,
  ETHOKIT_STATUS_ANALYSIS = 6,
  ETHOKIT_STATUS_PANIC = 7,
} EthokitStatus;

/**
 * A loaded session directory.
 */
typedef struct EthokitSession EthokitSession;

/**
 * A simulated world.
 */
typedef struct EthokitWorld EthokitWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next ethokit call on the same thread.
 */
const char *ethokit_last_error(void);

/**
 * # Safety
 * `s` must come from an ethokit function, or be null.
 */
void ethokit_string_free(char *s);

/**
 * Cohen's kappa of a row-major `k x k` count matrix.
 *
 * # Safety
 * `counts` must point to `k * k` values and `out_kappa` must be writable.
 */
enum EthokitStatus ethokit_cohens_kappa(const uint64_t *counts, size_t k, double *out_kappa);

/**
 * Overlap count divided by the number of possible pairs.
 *
 * # Safety
 * `out` must be writable.
 */
enum EthokitStatus ethokit_overlap_normalized(uint64_t count,
                                              uint64_t n_a,
                                              uint64_t n_b,
                                              bool same_species,
                                              double *out);

/**
 * Manual annotation seconds for `n` individuals over `t` seconds of video.
 *
 * # Safety
 * `out_seconds` must be writable.
 */
enum EthokitStatus ethokit_annotation_cost(uint64_t n, double t, double rate, double *out_seconds);

/**
 * Two-sided p-value of a t statistic.
 *
 * # Safety
 * `out_p` must be writable.
 */
enum EthokitStatus ethokit_t_two_sided_p(double t, double df, double *out_p);

/**
 * Loads a session directory. `ethogram_csv` may be null for the built-in ethogram.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum EthokitStatus ethokit_session_open(const char *dir,
                                        const char *ethogram_csv,
                                        struct EthokitSession **out);

/**
 * # Safety
 * `handle` must come from [`ethokit_session_open`] (or be null) and not be used afterwards.
 */
void ethokit_session_free(struct EthokitSession *handle);

/**
 * Number of validation violations in the session.
 *
 * # Safety
 * `handle` must be a live session; `out_count` must be writable.
 */
enum EthokitStatus ethokit_session_validate(const struct EthokitSession *handle, size_t *out_count);

/**
 * Time budgets of the session's frame labels as a JSON array.
 *
 * # Safety
 * `handle` must be a live session; `out_json` must be writable.
 */
enum EthokitStatus ethokit_session_time_budgets_json(const struct EthokitSession *handle,
                                                     char **out_json);

/**
 * Pooled transition matrix of the session's frame labels as JSON.
 *
 * # Safety
 * `handle` must be a live session; `out_json` must be writable.
 */
enum EthokitStatus ethokit_session_transitions_json(const struct EthokitSession *handle,
                                                    double interval_s,
                                                    char **out_json);

/**
 * Runs the simulator. `config_toml` may be null for defaults; `seed` always applies.
 *
 * # Safety
 * `config_toml` must be NUL-terminated or null; `out` must be writable.
 */
enum EthokitStatus ethokit_simulate(const char *config_toml,
                                    uint64_t seed,
                                    struct EthokitWorld **out);

/**
 * # Safety
 * `world` must come from [`ethokit_simulate`] (or be null) and not be used afterwards.
 */
void ethokit_world_free(struct EthokitWorld *world);

/**
 * # Safety
 * `world` must be live; `out_count` must be writable.
 */
enum EthokitStatus ethokit_world_individuals(const struct EthokitWorld *world, size_t *out_count);

/**
 * Writes the world as a session directory readable by [`ethokit_session_open`].
 *
 * # Safety
 * `world` must be live; `dir` must be NUL-terminated.
 */
enum EthokitStatus ethokit_world_export(const struct EthokitWorld *world, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ETHOKIT_H */
