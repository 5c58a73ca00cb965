#ifndef CHANFLOW_H
#define CHANFLOW_H

/* Generated by cbindgen from the chanflow-ffi crate; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Outcome class of a sweep point.
typedef enum ChanflowPointStatus {
  CHANFLOW_POINT_STATUS_OK = 0,
  CHANFLOW_POINT_STATUS_FAILED = 1,
  CHANFLOW_POINT_STATUS_SKIPPED = 2,
} ChanflowPointStatus;

// Result code of every fallible call.
typedef enum ChanflowStatus {
  CHANFLOW_STATUS_OK = 0,
  // A required pointer argument was NULL.
  CHANFLOW_STATUS_NULL_POINTER = 1,
  // An argument is malformed (bad UTF-8, empty list, ...).
  CHANFLOW_STATUS_INVALID_ARGUMENT = 2,
  // The configuration is invalid.
  CHANFLOW_STATUS_CONFIG = 3,
  // A solve failed.
  CHANFLOW_STATUS_SOLVE = 4,
  // Reading or writing files failed.
  CHANFLOW_STATUS_IO = 5,
  // An index or name does not exist.
  CHANFLOW_STATUS_OUT_OF_RANGE = 6,
  // An internal panic was caught at the boundary.
  CHANFLOW_STATUS_PANIC = 7,
} ChanflowStatus;

// Opaque configuration handle.
typedef struct ChanflowConfig ChanflowConfig;

// Opaque handle to the results of a sweep or single solve.
typedef struct ChanflowSweep ChanflowSweep;

// Summary of one sweep point.
typedef struct ChanflowPoint {
  double eps;
  double eta;
  double length;
  // Grid nodes per direction.
  size_t grid;
  enum ChanflowPointStatus status;
  bool converged;
  size_t iterations;
  // Largest contraction ratio from the second iteration on.
  double max_ratio;
  // Largest remainder norm over its admissible bound.
  double max_bound_ratio;
} ChanflowPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string (do not free).
const char *chanflow_version(void);

// Copy of the last error message of the calling thread, or NULL when the
// last call succeeded. Release with `chanflow_string_free`.
char *chanflow_last_error(void);

// Release a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must be NULL or a pointer obtained from this library that has not
// been freed yet.
void chanflow_string_free(char *s);

// Create a configuration with the built-in defaults.
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum ChanflowStatus chanflow_config_default(struct ChanflowConfig **out);

// Parse and validate a JSON configuration.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum ChanflowStatus chanflow_config_from_json(const char *json, struct ChanflowConfig **out);

// Serialize a configuration to JSON. Release the string with
// `chanflow_string_free`.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum ChanflowStatus chanflow_config_to_json(const struct ChanflowConfig *cfg, char **out);

// Use a single grid with `nodes` nodes per direction.
//
// # Safety
// `cfg` must be a live handle.
enum ChanflowStatus chanflow_config_set_grid(struct ChanflowConfig *cfg, size_t nodes);

// Replace the viscosity list (strictly decreasing values in (0, 1)).
//
// # Safety
// `cfg` must be a live handle and `eps` point to `n` readable doubles.
enum ChanflowStatus chanflow_config_set_eps(struct ChanflowConfig *cfg,
                                            const double *eps,
                                            size_t n);

// Set the worker count (0 = all cores).
//
// # Safety
// `cfg` must be a live handle.
enum ChanflowStatus chanflow_config_set_workers(struct ChanflowConfig *cfg, size_t workers);

// Enable or disable the estimate audits at every point.
//
// # Safety
// `cfg` must be a live handle.
enum ChanflowStatus chanflow_config_set_audits(struct ChanflowConfig *cfg, bool enabled);

// Release a configuration. NULL is ignored.
//
// # Safety
// `cfg` must be NULL or a live handle, which becomes invalid.
void chanflow_config_free(struct ChanflowConfig *cfg);

// Run the configured sweep. Individual point failures are recorded in the
// results; the call fails only for invalid configurations.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum ChanflowStatus chanflow_sweep_run(const struct ChanflowConfig *cfg,
                                       struct ChanflowSweep **out);

// Solve a single point at viscosity `eps` on a `nodes`² grid.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum ChanflowStatus chanflow_solve_point(const struct ChanflowConfig *cfg,
                                         double eps,
                                         size_t nodes,
                                         struct ChanflowSweep **out);

// Number of points in a result set.
//
// # Safety
// `s` must be a live handle and `out` a valid pointer.
enum ChanflowStatus chanflow_sweep_len(const struct ChanflowSweep *s, size_t *out);

// Summary of point `index`.
//
// # Safety
// `s` must be a live handle and `out` a valid pointer.
enum ChanflowStatus chanflow_sweep_point(const struct ChanflowSweep *s,
                                         size_t index,
                                         struct ChanflowPoint *out);

// Named quantity of point `index` (for example `gap_rho`).
//
// # Safety
// `s` must be a live handle, `name` a NUL-terminated string and `out` a
// valid pointer.
enum ChanflowStatus chanflow_sweep_quantity(const struct ChanflowSweep *s,
                                            size_t index,
                                            const char *name,
                                            double *out);

// Whether every summary check passed.
//
// # Safety
// `s` must be a live handle and `out` a valid pointer.
enum ChanflowStatus chanflow_sweep_passed(const struct ChanflowSweep *s, bool *out);

// The JSON summary. Release the string with `chanflow_string_free`.
//
// # Safety
// `s` must be a live handle and `out` a valid pointer.
enum ChanflowStatus chanflow_sweep_summary_json(const struct ChanflowSweep *s, char **out);

// Write the CSV tables, plot script, JSON summary and field dumps to `dir`.
//
// # Safety
// `s` must be a live handle and `dir` a NUL-terminated path.
enum ChanflowStatus chanflow_sweep_write_report(const struct ChanflowSweep *s, const char *dir);

// Release a result set. NULL is ignored.
//
// # Safety
// `s` must be NULL or a live handle, which becomes invalid.
void chanflow_sweep_free(struct ChanflowSweep *s);

// Log–log least-squares slope of `values` against `eps` (n ≥ 4 positive
// values) with its 95 % confidence half-width.
//
// # Safety
// `eps` and `values` must point to `n` readable doubles; `slope` and `ci`
// must be valid pointers.
enum ChanflowStatus chanflow_fit_rate(const double *eps,
                                      const double *values,
                                      size_t n,
                                      double *slope,
                                      double *ci);

// Background shear profile u_s(y) = α₀ + α₁y + α₂y(2 − y).
double chanflow_shear_profile(double alpha0, double alpha1, double alpha2, double y);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHANFLOW_H */
