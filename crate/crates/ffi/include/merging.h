#ifndef MERGING_H
#define MERGING_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Returned by crossing queries when the horizon is exhausted first.
#define MERGING_NOT_REACHED -1

typedef enum MergingStatus {
  MERGING_STATUS_OK = 0,
  MERGING_STATUS_NULL_POINTER = 1,
  MERGING_STATUS_INVALID_UTF8 = 2,
  MERGING_STATUS_STRUCTURAL = 3,
  MERGING_STATUS_DOMAIN = 4,
  MERGING_STATUS_RANGE = 5,
  MERGING_STATUS_HYPOTHESIS = 6,
  MERGING_STATUS_UNSUPPORTED = 7,
  MERGING_STATUS_RESOURCE = 8,
  MERGING_STATUS_CONFIG = 9,
  MERGING_STATUS_IO = 10,
  MERGING_STATUS_BUFFER_TOO_SMALL = 11,
  MERGING_STATUS_PANIC = 12,
} MergingStatus;

typedef enum MergingDistance {
  MERGING_DISTANCE_TV = 0,
  MERGING_DISTANCE_SEPARATION = 1,
} MergingDistance;

// Opaque environment handle.
typedef struct MergingEnvironment MergingEnvironment;

// Opaque experiment report handle.
typedef struct MergingReport MergingReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`) and returns the full message length without the NUL.
size_t merging_last_error(char *buf, size_t len);

// Builds an environment from row-major kernels (`horizon·size·size` values) and
// measures (`horizon·size` values). Invariance and monotonicity are checked.
enum MergingStatus merging_environment_new(size_t size,
                                           size_t horizon,
                                           const double *kernels,
                                           const double *measures,
                                           struct MergingEnvironment **out);

// Parses an environment file (JSON). Hypotheses are not checked; see
// [`merging_environment_validate`].
enum MergingStatus merging_environment_from_json(const char *json, struct MergingEnvironment **out);

// Lazy walk on the `n`-cycle with every edge conductance `min(start + slope·t, cap)`.
enum MergingStatus merging_environment_stick(size_t n,
                                             size_t horizon,
                                             double start,
                                             double slope,
                                             double cap,
                                             struct MergingEnvironment **out);

void merging_environment_free(struct MergingEnvironment *env);

enum MergingStatus merging_environment_size(const struct MergingEnvironment *env, size_t *out);

enum MergingStatus merging_environment_horizon(const struct MergingEnvironment *env, size_t *out);

// Writes the number of invariance and monotonicity violations to `violations`.
enum MergingStatus merging_environment_validate(const struct MergingEnvironment *env,
                                                size_t *violations);

// `γ(K_t* K_t)` for `t = 1..=horizon` into `out[0..horizon]`.
enum MergingStatus merging_poincare_gammas(const struct MergingEnvironment *env,
                                           double *out,
                                           size_t len);

// Exact distance between `μ_t^x` and `μ_t^y` for `t = 1..=horizon`.
enum MergingStatus merging_exact_curve(const struct MergingEnvironment *env,
                                       size_t x,
                                       size_t y,
                                       enum MergingDistance distance,
                                       double *out,
                                       size_t len);

// First `t` with distance at most `eta`, or [`MERGING_NOT_REACHED`].
enum MergingStatus merging_exact_merging_time(const struct MergingEnvironment *env,
                                              size_t x,
                                              size_t y,
                                              double eta,
                                              enum MergingDistance distance,
                                              int64_t *out);

// Time-inhomogeneous spectral total-variation bound at time `t`; `gammas` holds at
// least `t` values.
enum MergingStatus merging_bound_t3(const struct MergingEnvironment *env,
                                    const double *gammas,
                                    size_t len,
                                    size_t x,
                                    size_t y,
                                    size_t t,
                                    double *out);

// Runs an experiment described by a TOML document. Nothing is written to disk.
enum MergingStatus merging_run_config(const char *toml, struct MergingReport **out);

void merging_report_free(struct MergingReport *report);

// Smallest dominance margin, NaN when no bound applied.
enum MergingStatus merging_report_min_margin(const struct MergingReport *report, double *out);

// The report as CSV; free with [`merging_string_free`].
enum MergingStatus merging_report_csv(const struct MergingReport *report, char **out);

void merging_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MERGING_H */
