#ifndef MRS_H
#define MRS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values 2 and 3 agree with the CLI exit codes.
 */
typedef enum MrsStatus {
  MRS_STATUS_OK = 0,
  MRS_STATUS_IO = 1,
  MRS_STATUS_CONFIG = 2,
  MRS_STATUS_NUMERICAL = 3,
  MRS_STATUS_NULL_POINTER = 4,
  MRS_STATUS_BUFFER_TOO_SMALL = 5,
  MRS_STATUS_OUT_OF_RANGE = 6,
  MRS_STATUS_PANIC = 7,
} MrsStatus;

typedef enum MrsMethod {
  MRS_METHOD_HEUN = 0,
  MRS_METHOD_RK4 = 1,
  MRS_METHOD_RK6 = 2,
} MrsMethod;

/**
 * Opaque estimate handle.
 */
typedef struct MrsEstimate MrsEstimate;

/**
 * Opaque scenario handle: a validated configuration and its built system.
 */
typedef struct MrsScenario MrsScenario;

/**
 * Signed error components on one interval or summed over the run.
 */
typedef struct MrsComponents {
  double residual;
  double explicit_;
  double quadrature;
  double regularization;
} MrsComponents;

/**
 * Per-seed result. `effectivity` is NaN when the true pairing vanishes.
 */
typedef struct MrsSeedSummary {
  uint64_t seed;
  double estimate;
  double true_pairing;
  double effectivity;
  struct MrsComponents totals;
} MrsSeedSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mrs_version(void);

/**
 * Message of the last failing call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *mrs_last_error(void);

/**
 * Builds one of `circle_relax`, `circle_shear`, `fiber_network` with its
 * default parameters.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MrsStatus mrs_scenario_builtin(const char *name, struct MrsScenario **out);

/**
 * Builds a scenario from configuration text in the CLI's TOML format.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MrsStatus mrs_scenario_from_toml(const char *toml, struct MrsScenario **out);

/**
 * # Safety
 * `scenario` must be NULL or a handle from this library not yet freed.
 */
void mrs_scenario_free(struct MrsScenario *scenario);

/**
 * Spatial dimension (2 or 3) and marker count.
 *
 * # Safety
 * `scenario` must be a live handle; `dim` and `markers` writable.
 */
enum MrsStatus mrs_scenario_shape(const struct MrsScenario *scenario, size_t *dim, size_t *markers);

/**
 * Copies the initial marker positions, point-major, into `out[0..dim*markers]`.
 *
 * # Safety
 * `scenario` must be a live handle and `out` valid for `len` writes.
 */
enum MrsStatus mrs_scenario_initial_positions(const struct MrsScenario *scenario,
                                              double *out,
                                              size_t len);

/**
 * Integrates to the configured end time and copies the final positions.
 *
 * # Safety
 * `scenario` must be a live handle and `out` valid for `len` writes.
 */
enum MrsStatus mrs_simulate(const struct MrsScenario *scenario, double *out, size_t len);

/**
 * Endpoint errors against the sixth-order reference for `levels` halvings of
 * the configured step. Writes `levels` errors.
 *
 * # Safety
 * `scenario` must be a live handle and `errors` valid for `len` writes.
 */
enum MrsStatus mrs_converge(const struct MrsScenario *scenario,
                            enum MrsMethod method,
                            size_t levels,
                            double *errors,
                            size_t len);

/**
 * Runs the forward solve, one adjoint per configured seed, and the error
 * decomposition.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a writable pointer.
 */
enum MrsStatus mrs_estimate(const struct MrsScenario *scenario, struct MrsEstimate **out);

/**
 * # Safety
 * `estimate` must be NULL or a handle from this library not yet freed.
 */
void mrs_estimate_free(struct MrsEstimate *estimate);

/**
 * Number of seeds and of time intervals in the estimate.
 *
 * # Safety
 * `estimate` must be a live handle; `seeds` and `intervals` writable.
 */
enum MrsStatus mrs_estimate_shape(const struct MrsEstimate *estimate,
                                  size_t *seeds,
                                  size_t *intervals);

/**
 * Summary of seed number `index` (0-based, not the seed value).
 *
 * # Safety
 * `estimate` must be a live handle and `out` writable.
 */
enum MrsStatus mrs_estimate_seed(const struct MrsEstimate *estimate,
                                 size_t index,
                                 struct MrsSeedSummary *out);

/**
 * Per-interval components for seed number `index`, one entry per interval.
 *
 * # Safety
 * `estimate` must be a live handle and `out` valid for `len` writes.
 */
enum MrsStatus mrs_estimate_intervals(const struct MrsEstimate *estimate,
                                      size_t index,
                                      struct MrsComponents *out,
                                      size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRS_H */
