#ifndef LATENT_SHAP_H
#define LATENT_SHAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum LsStatus {
  LS_STATUS_OK = 0,
  LS_STATUS_NULL_POINTER = 1,
  LS_STATUS_INVALID_ARGUMENT = 2,
  LS_STATUS_PLAYER_COUNT_EXCEEDED = 3,
  LS_STATUS_INSUFFICIENT_SAMPLES = 4,
  LS_STATUS_INVALID_VALUE = 5,
  LS_STATUS_CALLBACK_FAILED = 6,
  LS_STATUS_CONFIG = 7,
  LS_STATUS_PROTOCOL = 8,
  LS_STATUS_SHAPE_MISMATCH = 9,
  LS_STATUS_UNKNOWN_IMAGE = 10,
  LS_STATUS_INTERNAL = 11,
  LS_STATUS_PANIC = 12,
} LsStatus;

/**
 * Shapley values with standard errors.
 */
typedef struct LsAttribution LsAttribution;

/**
 * A codec handle.
 */
typedef struct LsCodec LsCodec;

/**
 * A classifier handle.
 */
typedef struct LsModel LsModel;

/**
 * `v(S)` callback: writes the value of the coalition bitmask to `out` and
 * returns 0, or returns non-zero on failure. Called from one thread at a time.
 */
typedef int32_t (*LsValueFn)(void *user_data, uint64_t coalition, double *out);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Exact Shapley values of the `n`-player game given by `f`.
 *
 * # Safety
 * `f` must be safe to call with `user_data`; `out` must be writable.
 */
enum LsStatus ls_exact_shapley(uint32_t n,
                               LsValueFn f,
                               void *user_data,
                               struct LsAttribution **out);

/**
 * Monte-Carlo permutation estimate with `num_samples` permutations.
 *
 * # Safety
 * As [`ls_exact_shapley`].
 */
enum LsStatus ls_mc_shapley(uint32_t n,
                            LsValueFn f,
                            void *user_data,
                            size_t num_samples,
                            uint64_t seed,
                            struct LsAttribution **out);

/**
 * Builds a model from a spec string (`builtin:tophalf`, `builtin:hole` or
 * `exec:<cmd>`) for images of the given shape.
 *
 * # Safety
 * `spec` must be a NUL-terminated string; `out` must be writable.
 */
enum LsStatus ls_model_new(const char *spec,
                           uint32_t height,
                           uint32_t width,
                           uint32_t channels,
                           struct LsModel **out);

/**
 * Number of classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uint32_t ls_model_num_classes(const struct LsModel *model);

/**
 * Class probabilities of one image (`H·W·C` values, row-major,
 * channel-last) written to `probs[0..num_classes]`.
 *
 * # Safety
 * `image` must hold `len` doubles and `probs` `num_classes` doubles.
 */
enum LsStatus ls_model_predict(const struct LsModel *model,
                               const double *image,
                               size_t len,
                               uint32_t height,
                               uint32_t width,
                               uint32_t channels,
                               double *probs,
                               size_t num_classes);

/**
 * # Safety
 * `model` must be null or a handle from [`ls_model_new`], not yet freed.
 */
void ls_model_free(struct LsModel *model);

/**
 * Builds a codec (`identity`, `fourier` or `exec:<cmd>`); `bins` = 0 keeps
 * one Fourier feature per conjugate mode pair.
 *
 * # Safety
 * `spec` must be a NUL-terminated string; `out` must be writable.
 */
enum LsStatus ls_codec_new(const char *spec,
                           uint32_t height,
                           uint32_t width,
                           uint32_t channels,
                           uint32_t bins,
                           struct LsCodec **out);

/**
 * Number of semantic features, or 0 for a null handle.
 *
 * # Safety
 * `codec` must be null or a live handle.
 */
uint32_t ls_codec_num_features(const struct LsCodec *codec);

/**
 * # Safety
 * `codec` must be null or a handle from [`ls_codec_new`], not yet freed.
 */
void ls_codec_free(struct LsCodec *codec);

/**
 * Local explanation of `x` against `num_background` background images laid
 * out back to back. `target` < 0 explains the predicted class. Exact when
 * affordable, otherwise `num_samples` Monte-Carlo permutations.
 *
 * # Safety
 * `x` must hold `H·W·C` doubles and `background` `num_background·H·W·C`.
 */
enum LsStatus ls_explain_local(const struct LsModel *model,
                               const struct LsCodec *codec,
                               const double *x,
                               const double *background,
                               size_t num_background,
                               uint32_t height,
                               uint32_t width,
                               uint32_t channels,
                               int64_t target,
                               size_t num_samples,
                               uint64_t seed,
                               struct LsAttribution **out);

/**
 * Number of players, or 0 for a null handle.
 *
 * # Safety
 * `a` must be null or a live handle.
 */
size_t ls_attribution_len(const struct LsAttribution *a);

/**
 * Copies values and standard errors (either may be null) into arrays of
 * length `len`, which must equal [`ls_attribution_len`].
 *
 * # Safety
 * Non-null output pointers must hold `len` doubles.
 */
enum LsStatus ls_attribution_values(const struct LsAttribution *a,
                                    double *values,
                                    double *std_errors,
                                    size_t len);

/**
 * `v(N)` and `v(∅)` (sample means for Monte-Carlo results).
 *
 * # Safety
 * Non-null output pointers must be writable.
 */
enum LsStatus ls_attribution_endpoints(const struct LsAttribution *a,
                                       double *v_full,
                                       double *v_empty);

/**
 * JSON report of the attribution; release with [`ls_string_free`].
 *
 * # Safety
 * `out` must be writable.
 */
enum LsStatus ls_attribution_to_json(const struct LsAttribution *a, char **out);

/**
 * # Safety
 * `a` must be null or a handle returned by this library, not yet freed.
 */
void ls_attribution_free(struct LsAttribution *a);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void ls_string_free(char *s);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *ls_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LATENT_SHAP_H */
