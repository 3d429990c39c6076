#ifndef SPINJUNCTION_H
#define SPINJUNCTION_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call.
 */
typedef enum SjStatus {
  SJ_STATUS_OK = 0,
  SJ_STATUS_NULL_POINTER = 1,
  SJ_STATUS_INVALID_ARGUMENT = 2,
  SJ_STATUS_NUMERIC_FAILURE = 3,
  SJ_STATUS_BUFFER_TOO_SMALL = 4,
  SJ_STATUS_PANIC = 5,
} SjStatus;

/**
 * Generator used by [`sj_steady_compute`].
 */
typedef enum SjGenerator {
  SJ_GENERATOR_REDFIELD = 0,
  SJ_GENERATOR_LINDBLAD = 1,
} SjGenerator;

/**
 * Time-dependent method used by [`sj_trace_compute`].
 */
typedef enum SjMethod {
  SJ_METHOD_BORN = 0,
  SJ_METHOD_KUBO = 1,
  SJ_METHOD_ORACLE = 2,
} SjMethod;

/**
 * Files and summary produced by [`sj_run`].
 */
typedef struct SjBundle SjBundle;

/**
 * Run configuration.
 */
typedef struct SjRunSpec SjRunSpec;

/**
 * Steady state with diagnostics and currents.
 */
typedef struct SjSteady SjSteady;

/**
 * Junction current time series.
 */
typedef struct SjTrace SjTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the length needed including the NUL, or 0 if
 * there is no error.
 *
 * # Safety
 * `buf` must be null or point to at least `len` writable bytes.
 */
uintptr_t sj_last_error(char *buf, uintptr_t len);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void sj_string_free(char *s);

/**
 * Bessel function of the first kind of order zero.
 */
double sj_bessel_j0(double x);

/**
 * Decay rate of an up-polarised lead at frequency `omega` with regulator `eps`.
 * `near_singular` is set to 1 when `omega` is within `10 eps` of a band edge.
 *
 * # Safety
 * Output pointers must be valid for writes.
 */
enum SjStatus sj_decay_rate(double omega,
                            double j,
                            double jz,
                            double gamma,
                            double eps,
                            double *re,
                            double *im,
                            int *near_singular);

/**
 * `R = (I+ - I-) / (I+ + I-)` and the diode factor.
 *
 * # Safety
 * Output pointers must be valid for writes.
 */
enum SjStatus sj_rectification(double plus, double minus, double *r, double *diode);

/**
 * Default configuration for a mode name (`"steady"`, `"born"`, ...).
 *
 * # Safety
 * `mode` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum SjStatus sj_spec_new(const char *mode, struct SjRunSpec **out);

/**
 * Parse and validate a JSON configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum SjStatus sj_spec_from_json(const char *json, struct SjRunSpec **out);

/**
 * Set a dotted `key` to `value` (parsed as JSON, else taken as a string).
 * An update that fails validation leaves the configuration unchanged.
 *
 * # Safety
 * `spec` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum SjStatus sj_spec_set(struct SjRunSpec *spec, const char *key, const char *value);

/**
 * Effective configuration as JSON; free with [`sj_string_free`]. Null on failure.
 *
 * # Safety
 * `spec` must be null or a live handle.
 */
char *sj_spec_to_json(const struct SjRunSpec *spec);

/**
 * # Safety
 * `spec` must be null or a handle not yet freed.
 */
void sj_spec_free(struct SjRunSpec *spec);

/**
 * Run the configured pipeline, writing files below `out_dir`.
 *
 * # Safety
 * `spec` must be a live handle, `out_dir` a NUL-terminated path, `out` valid for writes.
 */
enum SjStatus sj_run(const struct SjRunSpec *spec, const char *out_dir, struct SjBundle **out);

/**
 * Look up a summary value of a finished run.
 *
 * # Safety
 * `bundle` must be a live handle, `key` NUL-terminated, `value` valid for writes.
 */
enum SjStatus sj_bundle_summary(const struct SjBundle *bundle, const char *key, double *value);

/**
 * Number of warnings raised during the run.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
uintptr_t sj_bundle_warning_count(const struct SjBundle *bundle);

/**
 * The full bundle as JSON; free with [`sj_string_free`]. Null on failure.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
char *sj_bundle_to_json(const struct SjBundle *bundle);

/**
 * # Safety
 * `bundle` must be null or a handle not yet freed.
 */
void sj_bundle_free(struct SjBundle *bundle);

/**
 * Solve for the steady state of the configured junction.
 *
 * # Safety
 * `spec` must be a live handle and `out` valid for writes.
 */
enum SjStatus sj_steady_compute(const struct SjRunSpec *spec,
                                enum SjGenerator generator,
                                struct SjSteady **out);

/**
 * Steady currents: into the left spin, into the right spin, and their half difference.
 *
 * # Safety
 * `steady` must be a live handle; output pointers valid for writes.
 */
enum SjStatus sj_steady_currents(const struct SjSteady *steady,
                                 double *left,
                                 double *right,
                                 double *total);

/**
 * Residual, trace error and minimum eigenvalue of the steady state.
 *
 * # Safety
 * `steady` must be a live handle; output pointers valid for writes.
 */
enum SjStatus sj_steady_diagnostics(const struct SjSteady *steady,
                                    double *residual,
                                    double *trace_error,
                                    double *min_eigenvalue);

/**
 * Row-major 4x4 density matrix in the basis `|00>, |01>, |10>, |11>`.
 *
 * # Safety
 * `steady` must be a live handle; `re` and `im` must each hold 16 doubles.
 */
enum SjStatus sj_steady_density(const struct SjSteady *steady, double *re, double *im);

/**
 * # Safety
 * `steady` must be null or a handle not yet freed.
 */
void sj_steady_free(struct SjSteady *steady);

/**
 * Junction current trace of a time-dependent method.
 *
 * # Safety
 * `spec` must be a live handle and `out` valid for writes.
 */
enum SjStatus sj_trace_compute(const struct SjRunSpec *spec,
                               enum SjMethod method,
                               struct SjTrace **out);

/**
 * Number of samples in a trace (0 for a null handle).
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
uintptr_t sj_trace_len(const struct SjTrace *trace);

/**
 * Copy times and total current into caller buffers of length `len`.
 *
 * # Safety
 * `trace` must be a live handle; `times` and `total` must hold `len` doubles.
 */
enum SjStatus sj_trace_copy(const struct SjTrace *trace,
                            double *times,
                            double *total,
                            uintptr_t len);

/**
 * Time average of the total current over `[0, horizon]`.
 *
 * # Safety
 * `trace` must be a live handle and `value` valid for writes.
 */
enum SjStatus sj_trace_time_average(const struct SjTrace *trace, double horizon, double *value);

/**
 * # Safety
 * `trace` must be null or a handle not yet freed.
 */
void sj_trace_free(struct SjTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPINJUNCTION_H */
