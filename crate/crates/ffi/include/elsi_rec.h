#ifndef ELSI_REC_H
#define ELSI_REC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every fallible entry point.
 */
typedef enum ElsiStatus {
  ELSI_STATUS_OK = 0,
  ELSI_STATUS_NULL_POINTER = 1,
  ELSI_STATUS_INVALID_ARGUMENT = 2,
  ELSI_STATUS_IO = 3,
  ELSI_STATUS_FORMAT = 4,
  ELSI_STATUS_DIMENSION_MISMATCH = 5,
  ELSI_STATUS_NO_CANDIDATES = 6,
  ELSI_STATUS_BUFFER_TOO_SMALL = 7,
  ELSI_STATUS_INCONSISTENT = 8,
  ELSI_STATUS_PANIC = 99,
} ElsiStatus;

/**
 * Opaque handle holding a classifier head and a topic index.
 */
typedef struct ElsiRecommender ElsiRecommender;

/**
 * One ranked result. `id` is owned by the recommender handle and stays
 * valid until the handle is freed.
 */
typedef struct ElsiMatch {
  const char *id;
  double distance;
  uint32_t rank;
} ElsiMatch;

/**
 * Summary of one recommendation call.
 */
typedef struct ElsiOutcome {
  uint32_t topic;
  double topic_probability;
  /**
   * Number of entries written to the results buffer.
   */
  size_t count;
  /**
   * Non-zero when the predicted topic was empty and the whole index was searched.
   */
  uint8_t out_of_topic;
} ElsiOutcome;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens a classifier head (`HEAD` file) and topic index (`TIDX` file).
 *
 * # Safety
 * `head_path` and `index_path` must be NUL-terminated strings; `out` must
 * point to writable storage for one pointer.
 */
enum ElsiStatus elsi_recommender_open(const char *head_path,
                                      const char *index_path,
                                      struct ElsiRecommender **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `handle` must come from [`elsi_recommender_open`] and not be used afterwards.
 */
void elsi_recommender_free(struct ElsiRecommender *handle);

/**
 * Embedding dimension D, or 0 for a null handle.
 *
 * # Safety
 * `handle` must be null or a live handle.
 */
size_t elsi_recommender_dim(const struct ElsiRecommender *handle);

/**
 * Number of topics K, or 0 for a null handle.
 *
 * # Safety
 * `handle` must be null or a live handle.
 */
size_t elsi_recommender_topics(const struct ElsiRecommender *handle);

/**
 * Number of ELSI articles indexed under `topic` (0 when out of range).
 *
 * # Safety
 * `handle` must be null or a live handle.
 */
size_t elsi_recommender_partition_size(const struct ElsiRecommender *handle, size_t topic);

/**
 * Predicts the topic of `query` and writes up to `k` nearest ELSI articles
 * of that topic into `results` (L1 distance, ties by id).
 *
 * `capacity` must be at least `k`. With `fallback_global` non-zero an empty
 * topic falls back to searching every topic and sets `out_of_topic`;
 * otherwise it yields `NoCandidates` with `outcome` still describing the
 * predicted topic.
 *
 * # Safety
 * `query` must point to `dim` doubles, `results` to `capacity` writable
 * entries and `outcome` to one writable [`ElsiOutcome`].
 */
enum ElsiStatus elsi_recommend(const struct ElsiRecommender *handle,
                               const double *query,
                               size_t dim,
                               size_t k,
                               uint8_t fallback_global,
                               struct ElsiMatch *results,
                               size_t capacity,
                               struct ElsiOutcome *outcome);

/**
 * Writes the predicted topic and, when `probabilities` is non-null, the K
 * softmax probabilities (`capacity` must then be at least K).
 *
 * # Safety
 * `query` must point to `dim` doubles, `topic` to one writable u32 and
 * `probabilities` (if non-null) to `capacity` writable doubles.
 */
enum ElsiStatus elsi_predict_topic(const struct ElsiRecommender *handle,
                                   const double *query,
                                   size_t dim,
                                   uint32_t *topic,
                                   double *probabilities,
                                   size_t capacity);

/**
 * Manhattan distance between two `dim`-long vectors.
 *
 * # Safety
 * `a` and `b` must each point to `dim` doubles; `out` to one writable double.
 */
enum ElsiStatus elsi_l1_distance(const double *a, const double *b, size_t dim, double *out);

/**
 * Accuracy and macro-F1 (over all `topics` classes, 0/0 counted as 0) of
 * `n` predictions.
 *
 * # Safety
 * `y_true` and `y_pred` must each point to `n` u32 labels; `accuracy` and
 * `macro_f1` to one writable double each.
 */
enum ElsiStatus elsi_evaluate(const uint32_t *y_true,
                              const uint32_t *y_pred,
                              size_t n,
                              uint32_t topics,
                              double *accuracy,
                              double *macro_f1);

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer is valid until the next call into this library on the same thread.
 */
const char *elsi_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *elsi_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELSI_REC_H */
