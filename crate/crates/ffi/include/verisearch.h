#ifndef VERISEARCH_H
#define VERISEARCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Loss direction for training and scoring.
 */
typedef enum VsDirection {
  VS_DIRECTION_TTS = 0,
  VS_DIRECTION_ASR = 1,
} VsDirection;

/**
 * Result code of every fallible call.
 */
typedef enum VsStatus {
  VS_STATUS_OK = 0,
  VS_STATUS_NULL_POINTER = 1,
  VS_STATUS_INVALID_UTF8 = 2,
  VS_STATUS_CONFIG = 3,
  VS_STATUS_DOMAIN = 4,
  VS_STATUS_TRAINING = 5,
  VS_STATUS_IO = 6,
  VS_STATUS_FORMAT = 7,
  VS_STATUS_PANIC = 8,
} VsStatus;

/**
 * Opaque FSQ codebook.
 */
typedef struct VsFsq VsFsq;

/**
 * Opaque k-gram model.
 */
typedef struct VsModel VsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *vs_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vs_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void vs_string_free(char *s);

/**
 * Creates a codebook with `levels[d]` grid points per dimension.
 *
 * # Safety
 * `levels` must point to `dims` values; `out` must be writable.
 */
enum VsStatus vs_fsq_new(const uint32_t *levels, size_t dims, struct VsFsq **out_fsq);

/**
 * # Safety
 * `fsq` must come from [`vs_fsq_new`] and not have been freed. Null is ignored.
 */
void vs_fsq_free(struct VsFsq *fsq);

/**
 * Number of codes, or 0 for a null handle.
 *
 * # Safety
 * `fsq` must be null or a live handle.
 */
uint64_t vs_fsq_codebook_size(const struct VsFsq *fsq);

/**
 * Number of dimensions, or 0 for a null handle.
 *
 * # Safety
 * `fsq` must be null or a live handle.
 */
size_t vs_fsq_dim(const struct VsFsq *fsq);

/**
 * Snaps `h` to the grid, writing the code values and their index.
 * `out_values` may be null when only the index is wanted.
 *
 * # Safety
 * `h` and `out_values` (if non-null) must hold `dims` values.
 */
enum VsStatus vs_fsq_quantize(const struct VsFsq *fsq,
                              const double *h,
                              size_t dims,
                              double *out_values,
                              uint64_t *out_index);

/**
 * # Safety
 * `out_codes` must hold `dims` values.
 */
enum VsStatus vs_fsq_index_to_codes(const struct VsFsq *fsq,
                                    uint64_t index,
                                    double *out_codes,
                                    size_t dims);

/**
 * # Safety
 * `codes` must hold `dims` values.
 */
enum VsStatus vs_fsq_codes_to_index(const struct VsFsq *fsq,
                                    const double *codes,
                                    size_t dims,
                                    uint64_t *out_index);

/**
 * Word error rate of `hyp` against a non-empty `reference`.
 *
 * # Safety
 * Each array must hold its stated number of ids.
 */
enum VsStatus vs_wer(const uint32_t *hyp,
                     size_t hyp_len,
                     const uint32_t *reference,
                     size_t ref_len,
                     double *out_wer);

/**
 * `1 - edit_distance / max_len` against a non-empty `reference`.
 *
 * # Safety
 * Each array must hold its stated number of ids.
 */
enum VsStatus vs_similarity(const uint32_t *candidate,
                            size_t candidate_len,
                            const uint32_t *reference,
                            size_t ref_len,
                            double *out_similarity);

/**
 * Loads a model file written by `vs_model_save` or the CLI.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_model` must be writable.
 */
enum VsStatus vs_model_load(const char *path, struct VsModel **out_model);

/**
 * Trains a model on a JSONL corpus file.
 *
 * # Safety
 * `corpus_path` must be a NUL-terminated string; `out_model` must be writable.
 */
enum VsStatus vs_model_train(const char *corpus_path,
                             size_t order,
                             double alpha,
                             enum VsDirection direction,
                             struct VsModel **out_model);

/**
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated string.
 */
enum VsStatus vs_model_save(const struct VsModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library and not have been freed. Null is ignored.
 */
void vs_model_free(struct VsModel *model);

/**
 * Summed negative log-likelihood of the model's target side of the pair,
 * and the number of scored tokens.
 *
 * # Safety
 * `model` must be a live handle; each array must hold its stated number of ids.
 */
enum VsStatus vs_model_log_prob(const struct VsModel *model,
                                const uint32_t *text,
                                size_t text_len,
                                const uint32_t *speech,
                                size_t speech_len,
                                double *out_nll,
                                size_t *out_count);

/**
 * Runs a search from a JSON run config and returns the JSON result.
 * Relative paths in the config resolve against `base_dir` (null means the
 * current directory). Free the result with [`vs_string_free`].
 *
 * # Safety
 * `config_json` and `base_dir` (if non-null) must be NUL-terminated strings.
 */
enum VsStatus vs_run_search(const char *config_json, const char *base_dir, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VERISEARCH_H */
