#ifndef SEAFARER_H
#define SEAFARER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_ARGUMENT = 2,
  SF_STATUS_IO = 3,
  SF_STATUS_CONFIG = 4,
  SF_STATUS_ENGINE = 5,
  SF_STATUS_PANIC = 6,
} SfStatus;

typedef enum SfStrategy {
  SF_STRATEGY_SEAFARING = 0,
  SF_STRATEGY_SMALL_EXACT = 1,
  SF_STRATEGY_RANDOM = 2,
} SfStrategy;

typedef enum SfAcquisitionKind {
  SF_ACQUISITION_KIND_EXP_ENTROPY = 0,
  SF_ACQUISITION_KIND_ENTROPY = 1,
  SF_ACQUISITION_KIND_LEAST_CONFIDENCE = 2,
  SF_ACQUISITION_KIND_MARGIN = 3,
} SfAcquisitionKind;

/**
 * An item collection with its tag index.
 */
typedef struct SfCorpus SfCorpus;

/**
 * A trained binary classifier.
 */
typedef struct SfModel SfModel;

/**
 * The record of one simulated run.
 */
typedef struct SfRun SfRun;

/**
 * An experiment config with its corpus and tag embeddings loaded.
 */
typedef struct SfSession SfSession;

typedef struct SfSynthParams {
  size_t n_items;
  size_t n_tags;
  size_t d;
  size_t k;
  uint64_t seed;
  double cluster_spread;
} SfSynthParams;

typedef struct SfTrainParams {
  double learning_rate;
  double momentum;
  size_t epochs;
  uint64_t seed;
  bool l2_normalize_features;
} SfTrainParams;

/**
 * One labeling iteration. `selected_id` is owned by the run handle.
 */
typedef struct SfRunRow {
  size_t iter;
  const char *selected_id;
  bool label;
  double auc;
  size_t n_pos;
  size_t n_neg;
  double neg_pos_ratio;
  double max_candidate_pos_prob;
  size_t n_model_evals;
  uint64_t n_queries;
} SfRunRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *sf_version(void);

/**
 * Message of the last failed call on this thread; empty if none. Valid until
 * the next failing call on the same thread.
 */
const char *sf_last_error(void);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void sf_string_free(char *s);

/**
 * Score of an item with positive-class probability `p1`; `kind` is an
 * `SfAcquisitionKind` value.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SfStatus sf_acquisition_score(uint32_t kind, double gamma, double p1, double *out);

/**
 * ROC-AUC of `scores` against 0/1 `labels`.
 *
 * # Safety
 * `scores` and `labels` must point to `n` elements; `out` must be writable.
 */
enum SfStatus sf_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Load a JSONL corpus.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SfStatus sf_corpus_load(const char *path, struct SfCorpus **out);

/**
 * Generate a synthetic corpus. The tag embeddings are discarded.
 *
 * # Safety
 * `params` must be readable; `out` must be writable.
 */
enum SfStatus sf_corpus_synth(const struct SfSynthParams *params, struct SfCorpus **out);

/**
 * Number of items; 0 for a null handle.
 *
 * # Safety
 * `corpus` must be a live handle or null.
 */
size_t sf_corpus_len(const struct SfCorpus *corpus);

/**
 * Feature dimension; 0 for a null handle.
 *
 * # Safety
 * `corpus` must be a live handle or null.
 */
size_t sf_corpus_dim(const struct SfCorpus *corpus);

/**
 * Number of distinct tags; 0 for a null handle.
 *
 * # Safety
 * `corpus` must be a live handle or null.
 */
size_t sf_corpus_tag_count(const struct SfCorpus *corpus);

/**
 * Ids of the items carrying `tag`, newline-separated, in posting order.
 *
 * # Safety
 * `corpus` must be live, `tag` NUL-terminated, `out` writable.
 */
enum SfStatus sf_corpus_tag_items(const struct SfCorpus *corpus, const char *tag, char **out);

/**
 * # Safety
 * `corpus` must come from this library, or be null.
 */
void sf_corpus_free(struct SfCorpus *corpus);

/**
 * Default training hyperparameters.
 */
struct SfTrainParams sf_train_params_default(void);

/**
 * Train a logistic model from zero weights on `n` row-major examples of
 * dimension `d` with 0/1 `labels`.
 *
 * # Safety
 * `features` must hold `n * d` values, `labels` `n` values; `params` must be
 * readable and `out` writable.
 */
enum SfStatus sf_model_train(const double *features,
                             const uint8_t *labels,
                             size_t n,
                             size_t d,
                             const struct SfTrainParams *params,
                             struct SfModel **out);

/**
 * Positive-class probability of one feature vector.
 *
 * # Safety
 * `model` must be live, `x` must hold `d` values, `out` writable.
 */
enum SfStatus sf_model_predict(const struct SfModel *model, const double *x, size_t d, double *out);

/**
 * Weights, bias and normalization flag as JSON.
 *
 * # Safety
 * `model` must be live and `out` writable.
 */
enum SfStatus sf_model_to_json(const struct SfModel *model, char **out);

/**
 * # Safety
 * `model` must come from this library, or be null.
 */
void sf_model_free(struct SfModel *model);

/**
 * Load an experiment config file (relative paths resolve against its
 * directory) and materialize its corpus.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum SfStatus sf_session_open(const char *path, struct SfSession **out);

/**
 * Like [`sf_session_open`] but from JSON text; relative paths resolve
 * against the working directory.
 *
 * # Safety
 * `json` must be NUL-terminated and `out` writable.
 */
enum SfStatus sf_session_from_json(const char *json, struct SfSession **out);

/**
 * Number of items in the session's corpus; 0 for a null handle.
 *
 * # Safety
 * `session` must be live or null.
 */
size_t sf_session_corpus_len(const struct SfSession *session);

/**
 * Run one strategy (an `SfStrategy` value) and seed with the simulated
 * oracle. Budget, task and hyperparameters come from the session's config.
 *
 * # Safety
 * `session` must be live and `out` writable.
 */
enum SfStatus sf_session_run(const struct SfSession *session,
                             uint32_t strategy,
                             uint64_t seed,
                             struct SfRun **out);

/**
 * # Safety
 * `session` must come from this library, or be null.
 */
void sf_session_free(struct SfSession *session);

/**
 * Number of rows (labels acquired); 0 for a null handle.
 *
 * # Safety
 * `run` must be live or null.
 */
size_t sf_run_len(const struct SfRun *run);

/**
 * Copy row `index` into `out`. `out->selected_id` lives as long as `run`.
 *
 * # Safety
 * `run` must be live and `out` writable.
 */
enum SfStatus sf_run_row(const struct SfRun *run, size_t index, struct SfRunRow *out);

/**
 * The run as CSV, header included.
 *
 * # Safety
 * `run` must be live and `out` writable.
 */
enum SfStatus sf_run_to_csv(const struct SfRun *run, char **out);

/**
 * # Safety
 * `run` must come from this library, or be null.
 */
void sf_run_free(struct SfRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEAFARER_H */
