#ifndef BINAGG_H
#define BINAGG_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BinaggStatus {
  BINAGG_STATUS_OK = 0,
  BINAGG_STATUS_INVALID_ARGUMENT = 1,
  BINAGG_STATUS_EMPTY_RESULT = 2,
  BINAGG_STATUS_INSUFFICIENT_BINS = 3,
  BINAGG_STATUS_SINGULAR = 4,
  BINAGG_STATUS_LOAD = 5,
  BINAGG_STATUS_IO = 6,
  BINAGG_STATUS_NULL_POINTER = 7,
  BINAGG_STATUS_BUFFER_TOO_SMALL = 8,
  BINAGG_STATUS_PANIC = 9,
} BinaggStatus;

/**
 * Opaque result of `binagg_fit`.
 */
typedef struct BinaggFit BinaggFit;

/**
 * Opaque result of `binagg_synthesize`.
 */
typedef struct BinaggSynthetic BinaggSynthetic;

/**
 * Pipeline settings. Obtain defaults from `binagg_config_default`.
 */
typedef struct BinaggConfig {
  double total_mu;
  /**
   * Budget ratios for bins, counts, feature sums and label sums.
   */
  double ratios[4];
  double theta;
  uint32_t max_depth;
  int64_t min_count;
  double alpha;
  bool strict_l2;
  bool algorithm2_literal;
  bool intercept;
  /**
   * Turns off every mechanism. The output is then not private.
   */
  bool disable_noise;
} BinaggConfig;

/**
 * Dataset description shared by the fitting and synthesis entry points.
 * `x` is `n × d` row-major, `lower`/`upper` hold the `d` domain bounds.
 * Rows must already lie inside the domain and labels inside the label
 * bounds.
 */
typedef struct BinaggData {
  const double *x;
  const double *y;
  size_t n;
  size_t d;
  const double *lower;
  const double *upper;
  double label_lower;
  double label_upper;
} BinaggData;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes, 0 if there
 * is none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t binagg_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *binagg_version(void);

/**
 * Composition of `n` GDP guarantees.
 *
 * # Safety
 * `mus` must point to `n` values and `out` must be writable.
 */
enum BinaggStatus binagg_compose(const double *mus, size_t n, double *out);

/**
 * δ(ε) of a μ-GDP mechanism.
 *
 * # Safety
 * `out` must be writable.
 */
enum BinaggStatus binagg_gdp_to_delta(double mu, double epsilon, double *out);

/**
 * Smallest ε at which a μ-GDP mechanism is (ε, δ)-DP.
 *
 * # Safety
 * `out` must be writable.
 */
enum BinaggStatus binagg_gdp_to_epsilon(double mu, double delta, double *out);

/**
 * μ for which every ε-DP mechanism is μ-GDP.
 *
 * # Safety
 * `out` must be writable.
 */
enum BinaggStatus binagg_pure_dp_to_gdp(double epsilon, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum BinaggStatus binagg_config_default(struct BinaggConfig *out);

/**
 * Fits the private regression. On success `*out` receives a handle to be
 * released with `binagg_fit_free`.
 *
 * # Safety
 * `data` and `config` must be valid, the arrays inside `data` must have the
 * stated sizes, and `out` must be writable.
 */
enum BinaggStatus binagg_fit(const struct BinaggData *data,
                             const struct BinaggConfig *config,
                             uint64_t seed,
                             struct BinaggFit **out);

/**
 * # Safety
 * `fit` must be null or a handle from `binagg_fit` not yet freed.
 */
void binagg_fit_free(struct BinaggFit *fit);

/**
 * Number of coefficients (including an intercept if requested); 0 for null.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t binagg_fit_dim(const struct BinaggFit *fit);

/**
 * Number of bins used by the fit; 0 for null.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t binagg_fit_bins(const struct BinaggFit *fit);

/**
 * Composed privacy cost of the run; NaN for null.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
double binagg_fit_total_mu(const struct BinaggFit *fit);

/**
 * # Safety
 * `fit` must be a live handle and `out` must hold `len` values.
 */
enum BinaggStatus binagg_fit_coefficients(const struct BinaggFit *fit, double *out, size_t len);

/**
 * # Safety
 * `fit` must be a live handle and `out` must hold `len` values.
 */
enum BinaggStatus binagg_fit_std_errors(const struct BinaggFit *fit, double *out, size_t len);

/**
 * Confidence interval endpoints at the configured level.
 *
 * # Safety
 * `fit` must be a live handle; `lower` and `upper` must each hold `len`
 * values.
 */
enum BinaggStatus binagg_fit_intervals(const struct BinaggFit *fit,
                                       double *lower,
                                       double *upper,
                                       size_t len);

/**
 * Covariance matrix, row-major `dim × dim`.
 *
 * # Safety
 * `fit` must be a live handle and `out` must hold `len` values.
 */
enum BinaggStatus binagg_fit_covariance(const struct BinaggFit *fit, double *out, size_t len);

/**
 * Generates a synthetic dataset. The intercept setting is ignored.
 *
 * # Safety
 * As for `binagg_fit`.
 */
enum BinaggStatus binagg_synthesize(const struct BinaggData *data,
                                    const struct BinaggConfig *config,
                                    uint64_t seed,
                                    struct BinaggSynthetic **out);

/**
 * # Safety
 * `ds` must be null or a handle from `binagg_synthesize` not yet freed.
 */
void binagg_synthetic_free(struct BinaggSynthetic *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t binagg_synthetic_len(const struct BinaggSynthetic *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t binagg_synthetic_dim(const struct BinaggSynthetic *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t binagg_synthetic_bins(const struct BinaggSynthetic *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
double binagg_synthetic_total_mu(const struct BinaggSynthetic *ds);

/**
 * Copies the records out: `x` receives `len × dim` values row-major, `y`
 * and `bin` receive `len` values each. `bin` may be null.
 *
 * # Safety
 * `ds` must be a live handle and the buffers must have the sizes above
 * with `rows >= len`.
 */
enum BinaggStatus binagg_synthetic_records(const struct BinaggSynthetic *ds,
                                           double *x,
                                           double *y,
                                           size_t *bin,
                                           size_t rows);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BINAGG_H */
