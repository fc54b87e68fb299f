#ifndef DOCVEC_H
#define DOCVEC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Language-model family of a [`DvModel`].
 */
typedef enum DvFamily {
  DV_FAMILY_RNN = 0,
  DV_FAMILY_LSTM = 1,
} DvFamily;

/**
 * Result code of every exported function.
 */
typedef enum DvStatus {
  DV_STATUS_OK = 0,
  DV_STATUS_NULL_POINTER = 1,
  DV_STATUS_INVALID_ARGUMENT = 2,
  DV_STATUS_IO = 3,
  DV_STATUS_FORMAT = 4,
  DV_STATUS_VOCABULARY_MISMATCH = 5,
  DV_STATUS_SHAPE = 6,
  DV_STATUS_TRAINING = 7,
  DV_STATUS_CONFIG = 8,
  DV_STATUS_OUT_OF_RANGE = 9,
  DV_STATUS_PANIC = 10,
} DvStatus;

/**
 * A tokenised, genre-labelled corpus.
 */
typedef struct DvCorpus DvCorpus;

/**
 * A parent language model.
 */
typedef struct DvModel DvModel;

/**
 * A document vector.
 */
typedef struct DvVector DvVector;

/**
 * Paired t-test outcome.
 */
typedef struct DvTTest {
  double t;
  size_t df;
  double critical;
  double mean_difference;
  bool significant;
} DvTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *dv_last_error(void);

/**
 * Library version as a NUL-terminated string.
 */
const char *dv_version(void);

/**
 * Samples a synthetic corpus of `genres` order-1 Markov sources.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DvStatus dv_corpus_synth(size_t genres,
                              size_t vocabulary,
                              size_t docs_per_genre,
                              size_t min_len,
                              size_t max_len,
                              uint64_t seed,
                              struct DvCorpus **out);

/**
 * Reads a `<path>\t<genre>` manifest with the default tokenisation policy.
 *
 * # Safety
 * `manifest` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DvStatus dv_corpus_load(const char *manifest, struct DvCorpus **out);

/**
 * # Safety
 * `corpus` must come from a `dv_corpus_*` constructor; `out` must be valid.
 */
enum DvStatus dv_corpus_len(const struct DvCorpus *corpus, size_t *out);

/**
 * # Safety
 * `corpus` must come from a `dv_corpus_*` constructor; `out` must be valid.
 */
enum DvStatus dv_corpus_num_genres(const struct DvCorpus *corpus, size_t *out);

/**
 * Genre index of every document, written to `labels[0..len]`.
 *
 * # Safety
 * `labels` must have room for `len` values.
 */
enum DvStatus dv_corpus_labels(const struct DvCorpus *corpus, uint32_t *labels, size_t len);

/**
 * # Safety
 * `corpus` must be null or a handle not yet freed.
 */
void dv_corpus_free(struct DvCorpus *corpus);

/**
 * Brown-clusters the corpus into `classes` word classes and trains a
 * single-precision parent model on all of it.
 *
 * # Safety
 * `corpus` must be a live handle and `out` a valid pointer.
 */
enum DvStatus dv_model_train(const struct DvCorpus *corpus,
                             enum DvFamily family,
                             size_t hidden,
                             size_t classes,
                             size_t epochs,
                             uint64_t seed,
                             struct DvModel **out);

/**
 * Loads a parent checkpoint, keeping its stored precision.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DvStatus dv_model_load(const char *path, struct DvModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum DvStatus dv_model_save(const struct DvModel *model, const char *path);

/**
 * # Safety
 * `model` must be a live handle; `out` must be valid.
 */
enum DvStatus dv_model_family(const struct DvModel *model, enum DvFamily *out);

/**
 * Perplexity of the model on document `doc` of `corpus`.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum DvStatus dv_model_perplexity(const struct DvModel *model,
                                  const struct DvCorpus *corpus,
                                  size_t doc,
                                  double *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void dv_model_free(struct DvModel *model);

/**
 * Adapts the parent to document `doc` with the default mask and schedule
 * and extracts `recipe` (e.g. `"dv_lstm_dm"` or `"dv_rnn_hk"`).
 *
 * # Safety
 * Handles must be live, `recipe` NUL-terminated and `out` valid.
 */
enum DvStatus dv_adapt_document(const struct DvModel *model,
                                const struct DvCorpus *corpus,
                                size_t doc,
                                const char *recipe,
                                struct DvVector **out);

/**
 * # Safety
 * `vector` must be a live handle; `out` must be valid.
 */
enum DvStatus dv_vector_dim(const struct DvVector *vector, size_t *out);

/**
 * Borrowed pointer to the vector's values, valid until the vector is freed.
 *
 * # Safety
 * `vector` must be a live handle or null (which yields null).
 */
const double *dv_vector_values(const struct DvVector *vector);

/**
 * Recipe name of the vector, valid until the vector is freed.
 *
 * # Safety
 * `vector` must be a live handle or null (which yields null).
 */
const char *dv_vector_recipe(const struct DvVector *vector);

/**
 * # Safety
 * `vector` must be null or a handle not yet freed.
 */
void dv_vector_free(struct DvVector *vector);

/**
 * Per-genre F1 averaged with weights proportional to gold counts.
 *
 * # Safety
 * `preds` and `golds` must each hold `n` values; `out` must be valid.
 */
enum DvStatus dv_weighted_fscore(const uint32_t *preds,
                                 const uint32_t *golds,
                                 size_t n,
                                 double *out);

/**
 * Two-sided paired t-test of `a - b` with `n - 1` degrees of freedom.
 *
 * # Safety
 * `a` and `b` must each hold `n` values; `out` must be valid.
 */
enum DvStatus dv_paired_ttest(const double *a,
                              const double *b,
                              size_t n,
                              double confidence,
                              struct DvTTest *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOCVEC_H */
