#ifndef ARMM_H
#define ARMM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ArmmVariant {
  ARMM_VARIANT_EM1 = 0,
  ARMM_VARIANT_EM2 = 1,
} ArmmVariant;

/**
 * Status codes. `Io`, `Validation` and `Numerical` share their values with
 * the command-line exit codes.
 */
typedef enum ArmmStatus {
  ARMM_STATUS_OK = 0,
  ARMM_STATUS_NULL_POINTER = 1,
  ARMM_STATUS_IO = 2,
  ARMM_STATUS_VALIDATION = 3,
  ARMM_STATUS_NUMERICAL = 4,
  ARMM_STATUS_INVALID_UTF8 = 5,
  ARMM_STATUS_PANIC = 6,
} ArmmStatus;

/**
 * A fitted mixture with its per-group AR models.
 */
typedef struct ArmmModel ArmmModel;

/**
 * A panel of named series.
 */
typedef struct ArmmPanel ArmmPanel;

typedef struct ArmmFitOptions {
  size_t groups;
  size_t lags;
  enum ArmmVariant variant;
  size_t restarts;
  uint64_t seed;
  bool normalized;
  size_t max_iter;
  double tol;
  double lambda_upper;
} ArmmFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Defaults matching the command line: 2 lags, EM1, 10 restarts, seed 0.
 */
struct ArmmFitOptions armm_fit_options_default(size_t groups);

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *armm_version(void);

/**
 * Message for the most recent failure on this thread, or null. Free with [`armm_string_free`].
 */
char *armm_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library that has not been freed.
 */
void armm_string_free(char *s);

struct ArmmPanel *armm_panel_new(void);

/**
 * # Safety
 * `panel` must be null or a handle from this library that has not been freed.
 */
void armm_panel_free(struct ArmmPanel *panel);

/**
 * Appends a copy of `values[0..len]` under `id`.
 *
 * # Safety
 * `panel` must be a live handle, `id` a NUL-terminated string and `values`
 * must point to `len` readable doubles.
 */
enum ArmmStatus armm_panel_add_series(struct ArmmPanel *panel,
                                      const char *id,
                                      const double *values,
                                      size_t len);

/**
 * Reads an `id,t,value` CSV file into a new panel.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum ArmmStatus armm_panel_read_csv(const char *path, struct ArmmPanel **out);

/**
 * Simulates one of the built-in benchmark scenarios (1 to 6).
 *
 * # Safety
 * `out` must be a writable pointer; `truth` must be null or point to room
 * for one label per individual of the scenario.
 */
enum ArmmStatus armm_simulate_case(size_t case_id,
                                   uint64_t seed,
                                   struct ArmmPanel **out,
                                   size_t *truth);

/**
 * Number of series in the panel, 0 for a null handle.
 *
 * # Safety
 * `panel` must be null or a live handle.
 */
size_t armm_panel_len(const struct ArmmPanel *panel);

/**
 * Fits the mixture and the per-group AR models.
 *
 * # Safety
 * `panel` must be a live handle, `options` readable and `out` writable.
 */
enum ArmmStatus armm_fit(const struct ArmmPanel *panel,
                         const struct ArmmFitOptions *options,
                         struct ArmmModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library that has not been freed.
 */
void armm_model_free(struct ArmmModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
size_t armm_model_groups(const struct ArmmModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
size_t armm_model_individuals(const struct ArmmModel *model);

/**
 * Final observed log-likelihood, NaN for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
double armm_model_loglik(const struct ArmmModel *model);

/**
 * Writes 0-based MAP labels in panel order; `len` must equal the number of individuals.
 *
 * # Safety
 * `model` must be a live handle and `out` must point to `len` writable values.
 */
enum ArmmStatus armm_model_labels(const struct ArmmModel *model, size_t *out, size_t len);

/**
 * Writes the AR coefficients of 0-based `group`; `len` must equal the number of lags.
 *
 * # Safety
 * `model` must be a live handle and `out` must point to `len` writable doubles.
 */
enum ArmmStatus armm_model_coefficients(const struct ArmmModel *model,
                                        size_t group,
                                        double *out,
                                        size_t len);

/**
 * The fit document as JSON, identical to `armm fit` output.
 *
 * # Safety
 * `model` must be a live handle and `out` writable. Free the result with [`armm_string_free`].
 */
enum ArmmStatus armm_model_to_json(const struct ArmmModel *model, char **out);

/**
 * Fits every G in `gmin..=gmax` and returns the AIC/BIC report as JSON.
 * `options->groups` is ignored.
 *
 * # Safety
 * `panel` must be a live handle, `options` readable and `out` writable.
 */
enum ArmmStatus armm_select_json(const struct ArmmPanel *panel,
                                 const struct ArmmFitOptions *options,
                                 size_t gmin,
                                 size_t gmax,
                                 char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARMM_H */
