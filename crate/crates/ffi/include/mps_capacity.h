#ifndef MPS_CAPACITY_H
#define MPS_CAPACITY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every fallible entry point.
 */
typedef enum MpscapStatus {
  MPSCAP_STATUS_OK = 0,
  MPSCAP_STATUS_NULL_POINTER = 1,
  MPSCAP_STATUS_DOMAIN = 2,
  MPSCAP_STATUS_DIMENSION = 3,
  MPSCAP_STATUS_CONVERGENCE = 4,
  MPSCAP_STATUS_RESOURCE = 5,
  MPSCAP_STATUS_INVALID_MODEL = 6,
  MPSCAP_STATUS_IO = 7,
  MPSCAP_STATUS_PARSE = 8,
  MPSCAP_STATUS_BUFFER_TOO_SMALL = 9,
  MPSCAP_STATUS_INDEX_OUT_OF_RANGE = 10,
  MPSCAP_STATUS_PANIC = 11,
} MpscapStatus;

/**
 * Opaque diagonal-distribution handle.
 */
typedef struct MpscapDistribution MpscapDistribution;

/**
 * Opaque MPS model handle.
 */
typedef struct MpscapModel MpscapModel;

/**
 * Capacity numbers at one block length.
 */
typedef struct MpscapCapacity {
  size_t n;
  /**
   * Closed-form capacity; NaN for custom models.
   */
  double closed_form;
  /**
   * `log2 d - H_n / n`.
   */
  double estimate_avg;
  /**
   * `log2 d - (H_n - H_{n-1})`.
   */
  double estimate_cond;
  double pruned_mass;
  /**
   * Difference between the distribution and channel entropy paths; NaN
   * when the channel was not built (n > 4).
   */
  double channel_path_difference;
} MpscapCapacity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL
 * terminated, truncated to `cap`). Returns the full message length in
 * bytes, excluding the terminator. `buf` may be NULL to query the length.
 *
 * # Safety
 * `buf` must be NULL or point to `cap` writable bytes.
 */
size_t mpscap_last_error_message(char *buf, size_t cap);

/**
 * `arccos(sqrt(2/3))`, the AKLT ground-state angle.
 */
double mpscap_aklt_ground_theta(void);

/**
 * Closed-form AKLT capacity `log2 3 - h2(theta)`.
 */
double mpscap_aklt_capacity(double theta);

/**
 * Closed-form MG capacity; `g` must lie in `[0, 1)`.
 *
 * # Safety
 * `out` must be NULL or valid for a write of one `double`.
 */
enum MpscapStatus mpscap_mg_capacity(double g, double *out);

/**
 * Creates the AKLT model at angle `theta` (radians).
 *
 * # Safety
 * `out` must be NULL or valid for a write of one pointer.
 */
enum MpscapStatus mpscap_model_aklt(double theta, struct MpscapModel **out);

/**
 * Creates the Majumdar–Ghosh model at `g` in `[0, 1)`.
 *
 * # Safety
 * `out` must be NULL or valid for a write of one pointer.
 */
enum MpscapStatus mpscap_model_mg(double g, struct MpscapModel **out);

/**
 * Creates a custom model from its JSON description
 * (`{"d", "D", "kraus", "rho"?, "label"?}`).
 *
 * # Safety
 * `json` must be NULL or a valid NUL-terminated string; `out` must be NULL
 * or valid for a write of one pointer.
 */
enum MpscapStatus mpscap_model_from_json(const char *json, struct MpscapModel **out);

/**
 * Releases a model handle.
 *
 * # Safety
 * `model` must be NULL or a handle from an `mpscap_model_*` constructor
 * that has not been freed.
 */
void mpscap_model_free(struct MpscapModel *model);

/**
 * Physical dimension `d`; 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t mpscap_model_local_dim(const struct MpscapModel *model);

/**
 * Bond dimension `D`; 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t mpscap_model_bond_dim(const struct MpscapModel *model);

/**
 * Largest residual among completeness, invariance, hermiticity,
 * positivity and trace of the invariant state.
 *
 * # Safety
 * `model` must be NULL or a live handle; `worst` must be NULL or valid for
 * a write of one `double`.
 */
enum MpscapStatus mpscap_model_validate(const struct MpscapModel *model, double *worst);

/**
 * Probability of one string of 1-based symbols.
 *
 * # Safety
 * `model` must be NULL or a live handle; `symbols` must point to `len`
 * bytes; `out` must be NULL or valid for a write of one `double`.
 */
enum MpscapStatus mpscap_string_probability(const struct MpscapModel *model,
                                            const uint8_t *symbols,
                                            size_t len,
                                            double *out);

/**
 * Enumerates the length-`n` diagonal distribution, cutting branches whose
 * partial product has max-abs entry `<= prune_tol` (0 disables pruning).
 *
 * # Safety
 * `model` must be NULL or a live handle; `out` must be NULL or valid for a
 * write of one pointer.
 */
enum MpscapStatus mpscap_distribution_enumerate(const struct MpscapModel *model,
                                                size_t n,
                                                double prune_tol,
                                                struct MpscapDistribution **out);

/**
 * Releases a distribution handle.
 *
 * # Safety
 * `dist` must be NULL or a handle from [`mpscap_distribution_enumerate`]
 * that has not been freed.
 */
void mpscap_distribution_free(struct MpscapDistribution *dist);

/**
 * Number of stored strings; 0 for a NULL handle.
 *
 * # Safety
 * `dist` must be NULL or a live handle.
 */
size_t mpscap_distribution_len(const struct MpscapDistribution *dist);

/**
 * String length `n`; 0 for a NULL handle.
 *
 * # Safety
 * `dist` must be NULL or a live handle.
 */
size_t mpscap_distribution_n(const struct MpscapDistribution *dist);

/**
 * Copies entry `index` (strings are in lexicographic order): its symbols
 * into `symbols` (capacity `cap`, needs at least `n`) and its probability
 * into `prob`.
 *
 * # Safety
 * `dist` must be NULL or a live handle; `symbols` must be NULL or point to
 * `cap` writable bytes; `prob` must be NULL or valid for a write of one
 * `double`.
 */
enum MpscapStatus mpscap_distribution_get(const struct MpscapDistribution *dist,
                                          size_t index,
                                          uint8_t *symbols,
                                          size_t cap,
                                          double *prob);

/**
 * Shannon entropy (bits), total stored probability and pruned mass.
 *
 * # Safety
 * `dist` must be NULL or a live handle; each out-pointer must be NULL (to
 * skip it) or valid for a write of one `double`.
 */
enum MpscapStatus mpscap_distribution_summary(const struct MpscapDistribution *dist,
                                              double *entropy,
                                              double *total,
                                              double *pruned_mass);

/**
 * Capacity estimates at block length `n`. For `n <= 4` the channel is built
 * and its entropy path compared with the distribution path.
 *
 * # Safety
 * `model` must be NULL or a live handle; `out` must be NULL or valid for a
 * write of one [`MpscapCapacity`].
 */
enum MpscapStatus mpscap_capacity_estimate(const struct MpscapModel *model,
                                           size_t n,
                                           double prune_tol,
                                           struct MpscapCapacity *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MPS_CAPACITY_H */
