#ifndef SMORL_H
#define SMORL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes. Values 2 to 6 match the command-line exit codes.
 */
typedef enum SmorlStatus {
  SMORL_STATUS_OK = 0,
  SMORL_STATUS_NULL_ARGUMENT = 1,
  SMORL_STATUS_CONFIG = 2,
  SMORL_STATUS_IO = 3,
  SMORL_STATUS_TRAINING = 4,
  SMORL_STATUS_UNDEFINED_METRIC = 5,
  SMORL_STATUS_OUT_OF_RANGE = 6,
  SMORL_STATUS_INVALID_UTF8 = 7,
  SMORL_STATUS_PANIC = 8,
} SmorlStatus;

/*
 A preprocessed session dataset.
 */
typedef struct SmorlDataset SmorlDataset;

/*
 A frozen item embedding used for the diversity reward.
 */
typedef struct SmorlEmbedding SmorlEmbedding;

/*
 A trained encoder with its supervised head.
 */
typedef struct SmorlModel SmorlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static NUL-terminated string.
 */
const char *smorl_version(void);

/*
 Message of the last failed call on this thread, or NULL after a success.
 Valid until the next call into the library on this thread.
 */
const char *smorl_last_error(void);

/*
 Loads an encoder checkpoint.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SmorlStatus smorl_model_load(const char *path, struct SmorlModel **out);

/*
 Releases a model. NULL is ignored.

 # Safety
 `model` must come from [`smorl_model_load`] and not be used afterwards.
 */
void smorl_model_free(struct SmorlModel *model);

/*
 Number of recommendable items `n`; item indices run from 1 to `n`.

 # Safety
 `model` must be a live handle and `out` a valid pointer.
 */
enum SmorlStatus smorl_model_n_items(const struct SmorlModel *model, size_t *out);

/*
 Length of the state vector produced by [`smorl_model_encode`].

 # Safety
 `model` must be a live handle and `out` a valid pointer.
 */
enum SmorlStatus smorl_model_state_size(const struct SmorlModel *model, size_t *out);

/*
 Encodes the clicked items of a session (oldest first; only the last 10
 are used) into `state`, which must hold exactly the state size.

 # Safety
 `items` must point to `n_items` values and `state` to `state_len` values.
 */
enum SmorlStatus smorl_model_encode(const struct SmorlModel *model,
                                    const size_t *items,
                                    size_t n_items,
                                    double *state,
                                    size_t state_len);

/*
 Writes the `k` best next items for a session, best first, with their
 scores. `scores` may be NULL.

 # Safety
 `items` must point to `n_items` values, `out_items` to `k` values and
 `scores`, when not NULL, to `k` values.
 */
enum SmorlStatus smorl_model_recommend(const struct SmorlModel *model,
                                       const size_t *items,
                                       size_t n_items,
                                       size_t k,
                                       size_t *out_items,
                                       double *scores);

/*
 Loads a dataset written by the `prepare` command.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SmorlStatus smorl_dataset_load(const char *path, struct SmorlDataset **out);

/*
 Releases a dataset. NULL is ignored.

 # Safety
 `dataset` must come from [`smorl_dataset_load`] and not be used afterwards.
 */
void smorl_dataset_free(struct SmorlDataset *dataset);

/*
 Session and item counts.

 # Safety
 `dataset` must be a live handle; the output pointers must be valid.
 */
enum SmorlStatus smorl_dataset_counts(const struct SmorlDataset *dataset,
                                      size_t *n_sessions,
                                      size_t *n_items);

/*
 Copies session `index` into `items`. `len` receives the session length;
 call with `capacity` 0 to query it.

 # Safety
 `items` must point to `capacity` values and `len` must be valid.
 */
enum SmorlStatus smorl_dataset_session(const struct SmorlDataset *dataset,
                                       size_t index,
                                       size_t *items,
                                       size_t capacity,
                                       size_t *len);

/*
 Loads a diversity embedding written by `pretrain-embedding`.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SmorlStatus smorl_embedding_load(const char *path, struct SmorlEmbedding **out);

/*
 Builds an embedding from a row-major `(n_items + 1) × dim` table whose
 row 0 is the padding item.

 # Safety
 `values` must point to `(n_items + 1) * dim` values and `out` be valid.
 */
enum SmorlStatus smorl_embedding_from_table(const double *values,
                                            size_t n_items,
                                            size_t dim,
                                            struct SmorlEmbedding **out);

/*
 Releases an embedding. NULL is ignored.

 # Safety
 `emb` must come from this library and not be used afterwards.
 */
void smorl_embedding_free(struct SmorlEmbedding *emb);

/*
 Diversity reward `1 - cos` between the last clicked and predicted items.

 # Safety
 `emb` must be a live handle and `out` a valid pointer.
 */
enum SmorlStatus smorl_diversity_reward(const struct SmorlEmbedding *emb,
                                        size_t last_item,
                                        size_t predicted,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMORL_H */
