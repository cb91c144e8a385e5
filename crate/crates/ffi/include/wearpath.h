#ifndef WEARPATH_H
#define WEARPATH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WpStatus {
  WP_STATUS_OK = 0,
  WP_STATUS_NULL_POINTER = 1,
  // Bad argument, malformed config or unreadable input.
  WP_STATUS_INVALID_INPUT = 2,
  // The computation itself failed (no contact, rank deficiency, canvas overflow, ...).
  WP_STATUS_NUMERICAL = 3,
  WP_STATUS_IO = 4,
  // A Rust panic was caught at the boundary.
  WP_STATUS_INTERNAL = 5,
} WpStatus;

typedef enum WpWidthConvention {
  WP_WIDTH_CONVENTION_MAJOR_ALONG_NORMAL = 0,
  WP_WIDTH_CONVENTION_SWAPPED = 1,
  WP_WIDTH_CONVENTION_EXTENT = 2,
} WpWidthConvention;

// Opaque raster canvas.
typedef struct WpCanvas WpCanvas;

// Opaque experiment configuration.
typedef struct WpExperiment WpExperiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the next failing call.
const char *wp_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void wp_string_free(char *s);

// Footprint axes (meters) of a cone with slope `m` tilted by `gamma_deg` at plane offset `d`.
//
// # Safety
// `major` and `minor` must be valid for writes.
enum WpStatus wp_tip_axes(double m, double gamma_deg, double d, double *major, double *minor);

// Deposited width (meters) of a footprint with the given axes at heading `psi` (radians).
//
// # Safety
// `width` must be valid for writes.
enum WpStatus wp_deposition_width(double major,
                                  double minor,
                                  double psi,
                                  enum WpWidthConvention convention,
                                  double *width);

// Least-squares fit of `force = theta·penetration + theta0` over `n` samples.
//
// # Safety
// `penetration` and `force` must point to `n` readable doubles; outputs must be writable.
enum WpStatus wp_fit_force(const double *penetration,
                           const double *force,
                           size_t n,
                           double *theta,
                           double *theta0);

// Builds an experiment from a JSON config document. Missing fields take their defaults;
// pass `"{}"` for the built-in configuration. Relative paths resolve against the working
// directory.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum WpStatus wp_experiment_from_json(const char *json, struct WpExperiment **out);

// Loads an experiment config file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum WpStatus wp_experiment_load(const char *path, struct WpExperiment **out);

// Overrides the number of iterations.
//
// # Safety
// `exp` must be a live handle.
enum WpStatus wp_experiment_set_iterations(struct WpExperiment *exp, uint32_t iterations);

// Runs both arms and returns the comparison summary as a JSON string. Artifacts are
// written under `out_dir` unless it is null.
//
// # Safety
// `exp` must be a live handle, `out_dir` null or NUL-terminated, `summary_json` writable.
enum WpStatus wp_experiment_compare(const struct WpExperiment *exp,
                                    const char *out_dir,
                                    char **summary_json);

// # Safety
// `exp` must be null or a handle from this library that has not been freed.
void wp_experiment_free(struct WpExperiment *exp);

// Reads a plain (P2) PGM canvas.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum WpStatus wp_canvas_read_pgm(const char *path, struct WpCanvas **out);

// Canvas size in pixels.
//
// # Safety
// `canvas` must be a live handle; outputs must be writable.
enum WpStatus wp_canvas_size(const struct WpCanvas *canvas, size_t *width, size_t *height);

// Measures the canvas against the experiment's reference stroke and threshold. Writes the
// error metric (meters) to `v` and the number of samples without a detected stroke to
// `invalid`.
//
// # Safety
// Handles must be live; outputs must be writable (`invalid` may be null).
enum WpStatus wp_canvas_measure(const struct WpCanvas *canvas,
                                const struct WpExperiment *exp,
                                double *v,
                                size_t *invalid);

// # Safety
// `canvas` must be null or a handle from this library that has not been freed.
void wp_canvas_free(struct WpCanvas *canvas);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WEARPATH_H */
