/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SEARCHLIGHT_RSA_H
#define SEARCHLIGHT_RSA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SrsaStatus {
  SrsaStatus_Ok = 0,
  SrsaStatus_NullPointer = 1,
  SrsaStatus_InvalidArgument = 2,
  SrsaStatus_Config = 3,
  SrsaStatus_Format = 4,
  SrsaStatus_Numeric = 5,
  SrsaStatus_Io = 6,
  SrsaStatus_Panic = 7,
} SrsaStatus;

/**
 * HRF-convolved design matrix: one column per event, then an intercept.
 */
typedef struct SrsaDesign SrsaDesign;

/**
 * A NIfTI-1 volume held in memory.
 */
typedef struct SrsaVolume SrsaVolume;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *srsa_version(void);

/**
 * Message of the most recent failure on this thread, or null. Valid until the next failing call.
 */
const char *srsa_last_error_message(void);

/**
 * Pearson correlation of two vectors of length `len`.
 *
 * # Safety
 * `a` and `b` must be valid for `len` reads and `out` for one write.
 */
enum SrsaStatus srsa_pearson(const double *a, const double *b, uintptr_t len, double *out);

/**
 * Spearman correlation (Pearson on midranks).
 *
 * # Safety
 * As [`srsa_pearson`].
 */
enum SrsaStatus srsa_spearman(const double *a, const double *b, uintptr_t len, double *out);

/**
 * Correlation of `a` and `b` after regressing out an intercept and `k` confounders, given
 * row-major as `k` rows of `len` values.
 *
 * # Safety
 * `a`, `b` valid for `len` reads, `confounders` for `k * len` reads (may be null when `k == 0`),
 * `out` for one write.
 */
enum SrsaStatus srsa_partial_correlation(const double *a,
                                         const double *b,
                                         uintptr_t len,
                                         const double *confounders,
                                         uintptr_t k,
                                         double *out);

/**
 * Number of voxel offsets within `radius_mm` of a center on an isotropic grid.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SrsaStatus srsa_searchlight_offset_count(double radius_mm, double voxel_mm, uintptr_t *out);

/**
 * Builds a design from `n_events` events (onsets and durations in seconds, integer labels).
 *
 * # Safety
 * The three arrays must be valid for `n_events` reads and `out` for one write.
 */
enum SrsaStatus srsa_design_new(const double *onsets,
                                const double *durations,
                                const uint32_t *labels,
                                uintptr_t n_events,
                                uintptr_t n_scans,
                                double tr,
                                struct SrsaDesign **out);

/**
 * Releases a design; null is ignored.
 *
 * # Safety
 * `design` must come from [`srsa_design_new`] and not be used afterwards.
 */
void srsa_design_free(struct SrsaDesign *design);

/**
 * Rows (scans), columns and stimulus count of a design.
 *
 * # Safety
 * `design` must be a live handle; each out-pointer valid for one write.
 */
enum SrsaStatus srsa_design_dims(const struct SrsaDesign *design,
                                 uintptr_t *rows,
                                 uintptr_t *cols,
                                 uintptr_t *q);

/**
 * Copies the design matrix, row-major, into `buf` of length rows × cols.
 *
 * # Safety
 * `design` must be a live handle and `buf` valid for `len` writes.
 */
enum SrsaStatus srsa_design_values(const struct SrsaDesign *design, double *buf, uintptr_t len);

/**
 * Stimulus coefficient covariance `(X' G^-1 X)^-1` (q × q, row-major) under an AR(1) model with
 * coefficient `rho` and an optional high-pass filter (`highpass_cutoff <= 0` disables it).
 *
 * # Safety
 * `design` must be a live handle and `buf` valid for `len` writes.
 */
enum SrsaStatus srsa_design_bcov(const struct SrsaDesign *design,
                                 double rho,
                                 double highpass_cutoff,
                                 double *buf,
                                 uintptr_t len);

/**
 * Reads a NIfTI-1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for one write.
 */
enum SrsaStatus srsa_volume_read(const char *path, struct SrsaVolume **out);

/**
 * Releases a volume; null is ignored.
 *
 * # Safety
 * `volume` must come from [`srsa_volume_read`] and not be used afterwards.
 */
void srsa_volume_free(struct SrsaVolume *volume);

/**
 * Writes `[nx, ny, nz, frames]` into `dims`.
 *
 * # Safety
 * `volume` must be a live handle and `dims` valid for 4 writes.
 */
enum SrsaStatus srsa_volume_dims(const struct SrsaVolume *volume, uintptr_t *dims);

/**
 * Copies voxel values (x fastest, then y, z, frame) into `buf`.
 *
 * # Safety
 * `volume` must be a live handle and `buf` valid for `len` writes.
 */
enum SrsaStatus srsa_volume_data(const struct SrsaVolume *volume, double *buf, uintptr_t len);

/**
 * Runs the simulated experiment described by a JSON config (omitted keys take defaults) and
 * returns the report as a JSON string, to be released with [`srsa_string_free`].
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` valid for one write.
 */
enum SrsaStatus srsa_simulate_json(const char *config_json, char **out);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void srsa_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEARCHLIGHT_RSA_H */
