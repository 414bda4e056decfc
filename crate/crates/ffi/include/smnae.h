#ifndef SMNAE_H
#define SMNAE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum SmnaeStatus {
  SMNAE_STATUS_OK = 0,
  SMNAE_STATUS_NULL_POINTER = 1,
  SMNAE_STATUS_INVALID_ARGUMENT = 2,
  SMNAE_STATUS_IO = 3,
  SMNAE_STATUS_FORMAT = 4,
  SMNAE_STATUS_DIMENSION_MISMATCH = 5,
  SMNAE_STATUS_NUMERICAL = 6,
  SMNAE_STATUS_PANIC = 7,
} SmnaeStatus;

typedef enum SmnaeFusion {
  /**
   * Use the rule stored in the model.
   */
  SMNAE_FUSION_DEFAULT = 0,
  SMNAE_FUSION_SUM = 1,
  SMNAE_FUSION_MAX = 2,
} SmnaeFusion;

/**
 * Opaque handle to a loaded pipeline model.
 */
typedef struct SmnaeModel SmnaeModel;

/**
 * Result of scoring one ordered video pair.
 */
typedef struct SmnaeScore {
  double fused_score;
  /**
   * Fused score on a per-vidlet scale (sum divided by the vidlet count).
   */
  double normalized_score;
  double threshold;
  size_t vidlets;
  /**
   * 1 when the pair is declared kin.
   */
  uint8_t kin;
} SmnaeScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or an empty string. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *smnae_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *smnae_version(void);

/**
 * Loads a model file. On success `*out` owns a handle to release with
 * [`smnae_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SmnaeStatus smnae_model_load(const char *path, struct SmnaeModel **out);

/**
 * Loads a model from an in-memory copy of a model file.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` must be writable.
 */
enum SmnaeStatus smnae_model_load_bytes(const uint8_t *data, size_t len, struct SmnaeModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from a load function and not have been freed.
 */
void smnae_model_free(struct SmnaeModel *model);

/**
 * Pixels per frame the model expects.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SmnaeStatus smnae_model_frame_dim(const struct SmnaeModel *model, size_t *out);

/**
 * Vidlet half-width `z`; a vidlet spans `2z + 1` frames.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SmnaeStatus smnae_model_z(const struct SmnaeModel *model, size_t *out);

/**
 * Scores the ordered pair `(a, b)`. Frames are row-major: frame `t` of a
 * video occupies `frames[t * frame_dim .. (t + 1) * frame_dim]`.
 *
 * # Safety
 * The frame buffers must hold `n_frames * frame_dim` readable values and
 * `out` must be writable.
 */
enum SmnaeStatus smnae_score_pair(const struct SmnaeModel *model,
                                  const double *frames_a,
                                  size_t n_frames_a,
                                  const double *frames_b,
                                  size_t n_frames_b,
                                  size_t frame_dim,
                                  enum SmnaeFusion fusion,
                                  struct SmnaeScore *out);

/**
 * Writes up to `capacity` per-vidlet kin probabilities to `probs` and the
 * full count to `*written`. With too small a buffer nothing is copied, the
 * count is still reported and the status is `InvalidArgument`.
 *
 * # Safety
 * Buffers as for [`smnae_score_pair`]; `probs` must hold `capacity` values.
 */
enum SmnaeStatus smnae_vidlet_probabilities(const struct SmnaeModel *model,
                                            const double *frames_a,
                                            size_t n_frames_a,
                                            const double *frames_b,
                                            size_t n_frames_b,
                                            size_t frame_dim,
                                            double *probs,
                                            size_t capacity,
                                            size_t *written);

/**
 * Equal error rate of `n` scores with labels (nonzero = kin). Writes the
 * rate in [0, 1] and the accuracy `100 * (1 - eer)`.
 *
 * # Safety
 * `scores` and `labels` must hold `n` values; outputs must be writable.
 */
enum SmnaeStatus smnae_compute_eer(const double *scores,
                                   const uint8_t *labels,
                                   size_t n,
                                   double *eer,
                                   double *accuracy_pct);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMNAE_H */
