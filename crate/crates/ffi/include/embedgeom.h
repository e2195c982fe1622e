#ifndef EMBEDGEOM_H
#define EMBEDGEOM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit by hand. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum EgStatus {
  EG_STATUS_OK = 0,
  EG_STATUS_NULL_POINTER = 1,
  EG_STATUS_INVALID_ARGUMENT = 2,
  EG_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * The input does not support the requested score (too few classes, etc.).
   */
  EG_STATUS_DEGENERATE = 4,
  EG_STATUS_IO = 5,
  EG_STATUS_FORMAT = 6,
  /**
   * The caller's buffer is too small; the needed length was written.
   */
  EG_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  EG_STATUS_INTERNAL = 8,
} EgStatus;

typedef enum EgMetricKind {
  EG_METRIC_KIND_COSINE = 0,
  EG_METRIC_KIND_EUCLIDEAN = 1,
  EG_METRIC_KIND_SPEARMAN = 2,
} EgMetricKind;

/**
 * Distance-based scores. `PrecisionAtK` reads its `k` from the call.
 */
typedef enum EgScore {
  EG_SCORE_PRECISION_AT_K = 0,
  EG_SCORE_GSR = 1,
  EG_SCORE_CSR = 2,
  EG_SCORE_CS = 3,
  EG_SCORE_CSCF = 4,
  EG_SCORE_SILHOUETTE = 5,
} EgScore;

/**
 * Square distance matrix stored as `f32`.
 */
typedef struct EgDistanceMatrix EgDistanceMatrix;

/**
 * `N x D` row-major vectors.
 */
typedef struct EgEmbeddingSet EgEmbeddingSet;

/**
 * Per-item class labels; unlabeled items are allowed.
 */
typedef struct EgLabels EgLabels;

typedef struct EgPermutationSummary {
  double observed;
  double baseline_mean;
  double ci_low;
  double ci_high;
  double p_value;
  size_t n_permutations;
} EgPermutationSummary;

typedef struct EgDtwResult {
  double distance;
  double cost;
  size_t path_len;
  /**
   * The band had to be widened to connect the corners.
   */
  bool widened;
} EgDtwResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *eg_version(void);

/**
 * Message of the most recent failure on the calling thread, or NULL.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *eg_last_error_message(void);

/**
 * Copies `n * d` row-major values into a new embedding set.
 *
 * # Safety
 * `data` must point to `n * d` readable doubles and `out` must be writable.
 */
enum EgStatus eg_embedding_set_new(const double *data,
                                   size_t n,
                                   size_t d,
                                   struct EgEmbeddingSet **out);

/**
 * # Safety
 * `set` must be NULL or a pointer returned by this library and not yet freed.
 */
void eg_embedding_set_free(struct EgEmbeddingSet *set);

/**
 * # Safety
 * `set` must be a live handle; `n` and `d` must be writable.
 */
enum EgStatus eg_embedding_set_shape(const struct EgEmbeddingSet *set, size_t *n, size_t *d);

/**
 * Copies the `n * d` values into `out`, which holds `capacity` doubles.
 *
 * # Safety
 * `set` must be a live handle and `out` must hold `capacity` writable doubles.
 */
enum EgStatus eg_embedding_set_copy_data(const struct EgEmbeddingSet *set,
                                         double *out,
                                         size_t capacity);

/**
 * Pools one `t x d` sequence whose first `valid_len` frames are real.
 *
 * `strategy` is a pooling name such as `mean_time_incl_pad+mean_feat`. The
 * pooled length is written to `written`; if it exceeds `capacity` the call
 * returns `BufferTooSmall` and leaves `out` untouched.
 *
 * # Safety
 * `frames` must hold `t * d` floats, `strategy` must be a NUL-terminated
 * string, `out` must hold `capacity` doubles and `written` must be writable.
 */
enum EgStatus eg_pool_sequence(const float *frames,
                               size_t t,
                               size_t d,
                               size_t valid_len,
                               const char *strategy,
                               double *out,
                               size_t capacity,
                               size_t *written);

/**
 * Fits PCA on `set` and returns the projected rows as a new set.
 *
 * # Safety
 * `set` must be a live handle and `out` must be writable.
 */
enum EgStatus eg_pca_fit_transform(const struct EgEmbeddingSet *set,
                                   size_t target_dims,
                                   bool whiten,
                                   struct EgEmbeddingSet **out);

/**
 * Pairwise distances between all rows of `set`.
 *
 * # Safety
 * `set` must be a live handle and `out` must be writable.
 */
enum EgStatus eg_distance_matrix_compute(const struct EgEmbeddingSet *set,
                                         enum EgMetricKind kind,
                                         struct EgDistanceMatrix **out);

/**
 * Wraps an externally computed `n x n` row-major matrix.
 *
 * # Safety
 * `values` must hold `n * n` floats and `out` must be writable.
 */
enum EgStatus eg_distance_matrix_from_values(const float *values,
                                             size_t n,
                                             struct EgDistanceMatrix **out);

/**
 * # Safety
 * `matrix` must be NULL or a pointer returned by this library and not yet freed.
 */
void eg_distance_matrix_free(struct EgDistanceMatrix *matrix);

/**
 * Number of rows, or 0 for a NULL handle.
 *
 * # Safety
 * `matrix` must be NULL or a live handle.
 */
size_t eg_distance_matrix_len(const struct EgDistanceMatrix *matrix);

/**
 * # Safety
 * `matrix` must be a live handle and `out` must be writable.
 */
enum EgStatus eg_distance_matrix_get(const struct EgDistanceMatrix *matrix,
                                     size_t i,
                                     size_t j,
                                     double *out);

/**
 * Copies the `n * n` row-major values into `out`, which holds `capacity` floats.
 *
 * # Safety
 * `matrix` must be a live handle and `out` must hold `capacity` writable floats.
 */
enum EgStatus eg_distance_matrix_copy_values(const struct EgDistanceMatrix *matrix,
                                             float *out,
                                             size_t capacity);

/**
 * Builds labels from `n` strings. NULL or empty entries mark unlabeled items.
 *
 * # Safety
 * `labels` must hold `n` pointers, each NULL or a NUL-terminated UTF-8
 * string, and `out` must be writable.
 */
enum EgStatus eg_labels_new(const char *const *labels, size_t n, struct EgLabels **out);

/**
 * # Safety
 * `labels` must be NULL or a pointer returned by this library and not yet freed.
 */
void eg_labels_free(struct EgLabels *labels);

/**
 * Number of distinct classes, or 0 for a NULL handle.
 *
 * # Safety
 * `labels` must be NULL or a live handle.
 */
size_t eg_labels_num_classes(const struct EgLabels *labels);

/**
 * Computes one score. `k` is used only by `PrecisionAtK`.
 *
 * # Safety
 * `matrix` and `labels` must be live handles and `out` must be writable.
 */
enum EgStatus eg_metric_score(const struct EgDistanceMatrix *matrix,
                              const struct EgLabels *labels,
                              enum EgScore score,
                              size_t k,
                              size_t min_class_size,
                              double *out);

/**
 * Scores `n_permutations` label shuffles with the geometry fixed.
 *
 * # Safety
 * `matrix` and `labels` must be live handles and `out` must be writable.
 */
enum EgStatus eg_permutation_baseline(const struct EgDistanceMatrix *matrix,
                                      const struct EgLabels *labels,
                                      enum EgScore score,
                                      size_t k,
                                      size_t n_permutations,
                                      uint64_t seed,
                                      size_t min_class_size,
                                      struct EgPermutationSummary *out);

/**
 * One-sided binomial tail `P(X >= successes)` for `X ~ Bin(n, chance)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum EgStatus eg_binomial_test(uint64_t successes, uint64_t n, double chance, double *out);

/**
 * Banded DTW between two row-major sequences of `dim`-wide frames.
 *
 * # Safety
 * `a` must hold `len_a * dim` doubles, `b` must hold `len_b * dim` doubles
 * and `out` must be writable.
 */
enum EgStatus eg_dtw_distance(const double *a,
                              size_t len_a,
                              const double *b,
                              size_t len_b,
                              size_t dim,
                              double band_radius,
                              bool normalize_path,
                              struct EgDtwResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMBEDGEOM_H */
