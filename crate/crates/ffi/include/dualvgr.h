#ifndef DUALVGR_H
#define DUALVGR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum DvgrStatus {
  DVGR_STATUS_OK = 0,
  DVGR_STATUS_INVALID_ARGUMENT = 1,
  DVGR_STATUS_INVALID_CONFIG = 2,
  DVGR_STATUS_CORRUPT_DATASET = 3,
  DVGR_STATUS_INVALID_CHECKPOINT = 4,
  DVGR_STATUS_NON_FINITE = 5,
  DVGR_STATUS_GRADIENT_CHECK = 6,
  DVGR_STATUS_IO = 7,
  DVGR_STATUS_SERIALIZATION = 8,
  DVGR_STATUS_NULL_POINTER = 9,
  DVGR_STATUS_PANIC = 10,
} DvgrStatus;

// A dataset split directory.
typedef struct DvgrDataset DvgrDataset;

// A trained model loaded from a checkpoint file.
typedef struct DvgrModel DvgrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dvgr_version(void);

// Message of the last failed call on this thread, or NULL if none. The
// pointer stays valid until the next failing call on the same thread.
const char *dvgr_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void dvgr_string_free(char *s);

// Loads a checkpoint written by `dualvgr train`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DvgrStatus dvgr_model_load(const char *path, struct DvgrModel **out);

// # Safety
// `model` must come from [`dvgr_model_load`] and not have been freed.
void dvgr_model_free(struct DvgrModel *model);

// # Safety
// `model` must be a live handle; `out` must be writable.
enum DvgrStatus dvgr_model_num_answers(const struct DvgrModel *model, size_t *out);

// Text of answer class `index`; free with [`dvgr_string_free`].
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum DvgrStatus dvgr_model_answer_label(const struct DvgrModel *model, size_t index, char **out);

// Answers a free-form question on raw features. `question` is
// whitespace-separated words. `appearance` holds `n_clips × frames ×
// app_dim` floats and `motion` holds `n_clips × motion_dim`, both
// row-major with the model's feature widths. `probs` may be NULL;
// otherwise it receives `num_answers` probabilities.
//
// # Safety
// All pointers must be valid for the stated lengths.
enum DvgrStatus dvgr_predict_features(const struct DvgrModel *model,
                                      const char *question,
                                      const float *appearance,
                                      size_t n_clips,
                                      size_t frames,
                                      const float *motion,
                                      size_t *answer,
                                      double *probs,
                                      size_t probs_len);

// Opens a split directory written by `dualvgr generate-data`.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be writable.
enum DvgrStatus dvgr_dataset_open(const char *dir, struct DvgrDataset **out);

// # Safety
// `dataset` must come from [`dvgr_dataset_open`] and not have been freed.
void dvgr_dataset_free(struct DvgrDataset *dataset);

// Number of questions in the dataset.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum DvgrStatus dvgr_dataset_len(const struct DvgrDataset *dataset, size_t *out);

// Predicts question `index` of `dataset`. `probs` may be NULL.
//
// # Safety
// Handles must be live; `probs` must hold `probs_len` doubles if not NULL.
enum DvgrStatus dvgr_predict(const struct DvgrModel *model,
                             const struct DvgrDataset *dataset,
                             size_t index,
                             size_t *answer,
                             double *probs,
                             size_t probs_len);

// Overall accuracy on `dataset`. When `report_json` is not NULL it
// receives the full report including per-question-type accuracy.
//
// # Safety
// Handles must be live; `accuracy` must be writable.
enum DvgrStatus dvgr_evaluate(const struct DvgrModel *model,
                              const struct DvgrDataset *dataset,
                              double *accuracy,
                              char **report_json);

// Per-step attention trace of question `index` as JSON.
//
// # Safety
// Handles must be live; `out` must be writable.
enum DvgrStatus dvgr_trace_json(const struct DvgrModel *model,
                                const struct DvgrDataset *dataset,
                                size_t index,
                                bool with_gat,
                                char **out);

// Linear-kernel HSIC between row-major `n × dz` and `n × dw` matrices.
//
// # Safety
// `z` and `w` must hold `n·dz` and `n·dw` doubles; `out` must be writable.
enum DvgrStatus dvgr_hsic(const double *z,
                          const double *w,
                          size_t n,
                          size_t dz,
                          size_t dw,
                          double *out);

// Frobenius distance between the row-normalised Gram matrices of two
// row-major `n × d` matrices.
//
// # Safety
// `a` and `b` must hold `n·d` doubles; `out` must be writable.
enum DvgrStatus dvgr_consistency_loss(const double *a,
                                      const double *b,
                                      size_t n,
                                      size_t d,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALVGR_H */
