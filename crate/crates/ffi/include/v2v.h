#ifndef V2V_H
#define V2V_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum V2vStatus {
  V2V_STATUS_OK = 0,
  V2V_STATUS_NULL_ARGUMENT = 1,
  /**
   * Shape, range or precondition violation.
   */
  V2V_STATUS_CONTRACT = 2,
  /**
   * Malformed or unsupported file contents.
   */
  V2V_STATUS_PARSE = 3,
  V2V_STATUS_IO = 4,
  /**
   * An iterative method failed to converge.
   */
  V2V_STATUS_NUMERIC = 5,
  V2V_STATUS_PANIC = 6,
} V2vStatus;

typedef enum V2vLossKind {
  V2V_LOSS_KIND_MAE = 0,
  V2V_LOSS_KIND_MSE = 1,
  V2V_LOSS_KIND_LD = 2,
  V2V_LOSS_KIND_GD = 3,
} V2vLossKind;

/**
 * Opaque handle to a trained network.
 */
typedef struct V2vModel V2vModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *v2v_version(void);

/**
 * Message for the most recent failure on this thread, or NULL after a
 * success. The pointer stays valid until the next call on this thread.
 */
const char *v2v_last_error_message(void);

/**
 * Load a model file. On success `*out` owns a handle to release with
 * [`v2v_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum V2vStatus v2v_model_load(const char *path, struct V2vModel **out);

/**
 * Decode a model from an in-memory buffer.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes and `out` must be writable.
 */
enum V2vStatus v2v_model_from_bytes(const uint8_t *bytes, size_t len, struct V2vModel **out);

/**
 * # Safety
 * `model` must be NULL or a handle from this library that has not been freed.
 */
void v2v_model_free(struct V2vModel *model);

/**
 * # Safety
 * `model` must be a live handle; `input_dim` and `output_dim` must be writable.
 */
enum V2vStatus v2v_model_dims(const struct V2vModel *model, size_t *input_dim, size_t *output_dim);

/**
 * Forward one input vector.
 *
 * # Safety
 * `input` must hold `input_len` values and `output` room for `output_len`.
 */
enum V2vStatus v2v_model_forward(const struct V2vModel *model,
                                 const double *input,
                                 size_t input_len,
                                 double *output,
                                 size_t output_len);

/**
 * Spectral-norm upper bound on the per-output Lipschitz constants.
 *
 * `per_output` may be NULL when `per_output_len` is 0; otherwise its length
 * must equal the output dimension. `total` receives the sum.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum V2vStatus v2v_model_lipschitz_upper(const struct V2vModel *model,
                                         double *per_output,
                                         size_t per_output_len,
                                         double *total);

/**
 * Batch loss over `n` row-major samples of dimension `dim`.
 *
 * `alpha` holds `dim` scales and is required for LD and GD; it is ignored
 * (and may be NULL) for MAE and MSE.
 *
 * # Safety
 * `predictions` and `targets` must each hold `n * dim` values.
 */
enum V2vStatus v2v_loss(enum V2vLossKind kind,
                        const double *predictions,
                        const double *targets,
                        size_t n,
                        size_t dim,
                        const double *alpha,
                        double *out);

/**
 * Short-time objective intelligibility of `processed` against `clean`.
 *
 * # Safety
 * Both signals must hold `len` samples.
 */
enum V2vStatus v2v_stoi(const double *clean,
                        const double *processed,
                        size_t len,
                        uint32_t sample_rate,
                        double *out);

/**
 * Segmental SNR in dB over non-overlapping frames of `frame` samples.
 *
 * # Safety
 * Both signals must hold `len` samples.
 */
enum V2vStatus v2v_seg_snr(const double *clean,
                           const double *processed,
                           size_t len,
                           uint32_t sample_rate,
                           size_t frame,
                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* V2V_H */
