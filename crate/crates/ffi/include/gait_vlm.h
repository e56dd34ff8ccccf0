#ifndef GAIT_VLM_H
#define GAIT_VLM_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GvStatus {
  GV_STATUS_OK = 0,
  GV_STATUS_NULL_POINTER = 1,
  GV_STATUS_INVALID_UTF8 = 2,
  GV_STATUS_IO = 3,
  GV_STATUS_PARSE = 4,
  GV_STATUS_CONFIG = 5,
  GV_STATUS_SHAPE = 6,
  GV_STATUS_OUT_OF_RANGE = 7,
  GV_STATUS_INVALID = 8,
  GV_STATUS_TENSOR = 9,
  GV_STATUS_DIVERGED = 10,
  GV_STATUS_BUFFER_TOO_SMALL = 11,
  GV_STATUS_PANIC = 12,
} GvStatus;

/**
 * Opaque trained classifier.
 */
typedef struct GvModel GvModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *gv_last_error(void);

/**
 * Static name of a status code.
 */
const char *gv_status_name(enum GvStatus status);

/**
 * Loads a checkpoint directory written by `gait-vlm train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum GvStatus gv_model_load(const char *path, struct GvModel **out);

/**
 * # Safety
 * `model` must come from [`gv_model_load`] and not be used afterwards.
 */
void gv_model_free(struct GvModel *model);

/**
 * Number of classes, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t gv_model_num_classes(const struct GvModel *model);

/**
 * Class name owned by the handle, null when out of range.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
const char *gv_model_class_name(const struct GvModel *model, size_t index);

/**
 * Classifies `frames` grayscale or color frames of `height x width x channels`
 * u8 pixels. Writes class probabilities to `probabilities[0..capacity]` and the
 * predicted index to `class_out`.
 *
 * # Safety
 * `pixels` must hold `frames * height * width * channels` bytes and
 * `probabilities` must hold `capacity` doubles.
 */
enum GvStatus gv_model_classify(const struct GvModel *model,
                                const uint8_t *pixels,
                                size_t frames,
                                size_t height,
                                size_t width,
                                size_t channels,
                                double *probabilities,
                                size_t capacity,
                                size_t *class_out);

/**
 * Number token for a parameter value.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum GvStatus gv_value_to_token(double value, uint32_t *out);

/**
 * Value represented by a number token.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum GvStatus gv_token_to_value(uint32_t token, double *out);

/**
 * Tokenizes `text` with start and end markers. `len_out` always receives the
 * required length; ids are written only when `capacity` suffices.
 *
 * # Safety
 * `text` must be NUL-terminated, `ids` must hold `capacity` values or be null
 * when `capacity` is 0, and `len_out` must be writable.
 */
enum GvStatus gv_tokenize(const char *text, uint32_t *ids, size_t capacity, size_t *len_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAIT_VLM_H */
