#ifndef DOMD_H
#define DOMD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call. `Ok` is zero.
typedef enum DomdStatus {
  DOMD_STATUS_OK = 0,
  // A required pointer argument was null.
  DOMD_STATUS_NULL_POINTER = 1,
  // An argument was out of range, not UTF-8, or named nothing known.
  DOMD_STATUS_INVALID_ARGUMENT = 2,
  // A configuration file failed to parse or validate.
  DOMD_STATUS_CONFIG = 3,
  // Reading a file failed.
  DOMD_STATUS_IO = 4,
  // The computation rejected its inputs (geometry, depth, empty support).
  DOMD_STATUS_COMPUTE = 5,
  // The caller's buffer is smaller than the result.
  DOMD_STATUS_BUFFER_TOO_SMALL = 6,
  // A bug: the library panicked.
  DOMD_STATUS_PANIC = 7,
} DomdStatus;

// Suite a scene is drawn from.
typedef enum DomdSuiteKind {
  DOMD_SUITE_KIND_STATIC = 0,
  DOMD_SUITE_KIND_MOVING = 1,
} DomdSuiteKind;

// Pixel subset a metric is evaluated on.
typedef enum DomdRegion {
  DOMD_REGION_ALL = 0,
  // Pixels of dynamic objects at time `t`.
  DOMD_REGION_DYNAMIC = 1,
  DOMD_REGION_STATIC = 2,
} DomdRegion;

// Output of `domd_solve`.
typedef struct DomdResult DomdResult;

// A rendered frame triplet with its depth prior and solver settings.
typedef struct DomdScene DomdScene;

// Depth metrics of a solve against the scene's ground truth.
typedef struct DomdMetrics {
  double abs_rel;
  double sq_rel;
  double rmse;
  double rmse_log;
  double delta1;
  double delta2;
  double delta3;
  size_t n_pixels;
} DomdMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *domd_version(void);

// Message of the last failed call on this thread, or null if none.
// Valid until the next failing call on the same thread.
const char *domd_last_error(void);

// Renders scene `index` of a standard suite with an exact prior.
//
// # Safety
// `out` must be valid for writing one pointer.
enum DomdStatus domd_scene_from_suite(enum DomdSuiteKind kind,
                                      size_t index,
                                      uint64_t seed,
                                      struct DomdScene **out);

// Loads and renders a scene TOML file, including its prior and any
// `[solver]` table.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writing
// one pointer.
enum DomdStatus domd_scene_from_config(const char *path, struct DomdScene **out);

// Image size of a scene.
//
// # Safety
// `scene` is a live handle; `width` and `height` are valid for writes.
enum DomdStatus domd_scene_size(const struct DomdScene *scene, size_t *width, size_t *height);

// Releases a scene. Null is ignored.
//
// # Safety
// `scene` is null or a handle not yet freed.
void domd_scene_free(struct DomdScene *scene);

// Solves a scene. `variant` names a toggle set such as `"full"` or
// `"no_domd"`; null keeps the scene's own solver settings.
//
// # Safety
// `scene` is a live handle; `variant` is null or NUL-terminated; `out` is
// valid for writing one pointer.
enum DomdStatus domd_solve(const struct DomdScene *scene,
                           const char *variant,
                           struct DomdResult **out);

// Copies the solved depth, row-major, into `buf`. Invalid pixels are NaN.
//
// # Safety
// `result` is a live handle; `buf` is valid for `len` writes.
enum DomdStatus domd_result_depth(const struct DomdResult *result, double *buf, size_t len);

// Metrics of `result` against the ground truth of `scene` on `region`.
// An empty region is a compute error.
//
// # Safety
// `result` and `scene` are live handles; `out` is valid for one write.
enum DomdStatus domd_result_metrics(const struct DomdResult *result,
                                    const struct DomdScene *scene,
                                    enum DomdRegion region,
                                    struct DomdMetrics *out);

// Releases a result. Null is ignored.
//
// # Safety
// `result` is null or a handle not yet freed.
void domd_result_free(struct DomdResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOMD_H */
