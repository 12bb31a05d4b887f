#ifndef STARTRACK_H
#define STARTRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Catalog id slot value for an observation that could not be identified.
 */
#define ST_UNIDENTIFIED -1

/**
 * Catalog id slot value for an observation rejected as a false star.
 */
#define ST_SPIKE -2

/**
 * Result code of every fallible call.
 */
typedef enum StStatus {
  ST_STATUS_OK = 0,
  ST_STATUS_NULL_POINTER = 1,
  ST_STATUS_INVALID_ARGUMENT = 2,
  ST_STATUS_IO = 3,
  ST_STATUS_NO_IDENTIFICATION = 4,
  ST_STATUS_ESTIMATION_FAILED = 5,
  ST_STATUS_PANIC = 6,
} StStatus;

/**
 * Identification path taken by a pipeline step.
 */
typedef enum StMethod {
  ST_METHOD_SKIPPED = 0,
  ST_METHOD_PYRAMID = 1,
  ST_METHOD_RECURSIVE = 2,
  ST_METHOD_FALLBACK = 3,
} StMethod;

/**
 * Star catalog and pair database.
 */
typedef struct StDatabase StDatabase;

/**
 * Tracking loop state. Borrows the database it was created from.
 */
typedef struct StPipeline StPipeline;

/**
 * Angular-velocity estimate.
 */
typedef struct StRateEstimate {
  /**
   * Unit rotation axis in the camera frame.
   */
  double axis[3];
  /**
   * Rate magnitude, rad/s.
   */
  double rate;
  /**
   * One-sigma rate uncertainty, rad/s; negative when unavailable.
   */
  double sigma_rate;
  /**
   * Samples used after window adaptation.
   */
  size_t window_n;
} StRateEstimate;

/**
 * Outcome of one pipeline step.
 */
typedef struct StStepResult {
  /**
   * 1 when the frame was identified and an attitude produced.
   */
  int32_t success;
  enum StMethod method;
  size_t n_identified;
  size_t n_spikes;
  /**
   * Inertial-to-camera attitude, scalar last; zero when `success` is 0.
   */
  double quaternion[4];
  /**
   * 1 when `rate` holds an estimate.
   */
  int32_t has_rate;
  struct StRateEstimate rate;
} StStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *st_last_error_message(void);

/**
 * Opens a CSV catalog or binary pair database at `path`, or the bundled
 * catalog when `path` is null, keeping stars brighter than `magnitude`.
 *
 * # Safety
 * `path` must be null or a NUL-terminated string; `out` must be writable.
 */
enum StStatus st_database_open(const char *path, double magnitude, struct StDatabase **out);

/**
 * # Safety
 * `db` must be null or a handle from `st_database_open` not yet freed, and
 * no pipeline created from it may still be alive.
 */
void st_database_free(struct StDatabase *db);

/**
 * Number of stars in the database, or 0 for a null handle.
 *
 * # Safety
 * `db` must be null or a live handle.
 */
size_t st_database_star_count(const struct StDatabase *db);

/**
 * Number of catalogued star pairs, or 0 for a null handle.
 *
 * # Safety
 * `db` must be null or a live handle.
 */
size_t st_database_pair_count(const struct StDatabase *db);

/**
 * Identifies `n` observed directions in lost-in-space mode. `ids_out[i]`
 * receives the catalog id of observation `i`, `ST_SPIKE` or
 * `ST_UNIDENTIFIED`.
 *
 * # Safety
 * `db` must be live, `xyz` must hold `3·n` doubles and `ids_out` room for `n`.
 */
enum StStatus st_pyramid_identify(const struct StDatabase *db,
                                  const double *xyz,
                                  size_t n,
                                  int64_t *ids_out);

/**
 * Creates a tracking loop with default settings.
 *
 * # Safety
 * `db` must stay alive until the pipeline is freed; `out` must be writable.
 */
enum StStatus st_pipeline_new(const struct StDatabase *db, struct StPipeline **out);

/**
 * # Safety
 * `p` must be null or a handle from `st_pipeline_new` not yet freed.
 */
void st_pipeline_free(struct StPipeline *p);

/**
 * Processes one frame taken at time `t` (seconds, increasing).
 *
 * # Safety
 * `p` must be live, `xyz` must hold `3·n` doubles and `out` must be writable.
 */
enum StStatus st_pipeline_step(struct StPipeline *p,
                               double t,
                               const double *xyz,
                               size_t n,
                               struct StStepResult *out);

/**
 * Estimates the angular velocity from `n` time-tagged quaternions. The
 * window shrinks from the oldest sample until the third singular value
 * falls below `tolerance`; pass 0 for the default tolerance.
 *
 * # Safety
 * `times` must hold `n` doubles, `xyzw` `4·n` doubles, `out` must be writable.
 */
enum StStatus st_quatera_estimate(const double *times,
                                  const double *xyzw,
                                  size_t n,
                                  double tolerance,
                                  struct StRateEstimate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STARTRACK_H */
