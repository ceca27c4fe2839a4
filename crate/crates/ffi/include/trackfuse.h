#ifndef TRACKFUSE_H
#define TRACKFUSE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum TfStatus {
  TF_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  TF_STATUS_NULL_POINTER = 1,
  /**
   * Bad argument or configuration.
   */
  TF_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed JSON or inconsistent input data.
   */
  TF_STATUS_FORMAT = 3,
  /**
   * Propagation backend failure.
   */
  TF_STATUS_BACKEND = 4,
  /**
   * Bug or panic inside the library.
   */
  TF_STATUS_INTERNAL = 5,
} TfStatus;

/**
 * A binary mask.
 */
typedef struct TfMask TfMask;

/**
 * Streaming tracker driven by known inter-frame warps.
 */
typedef struct TfTracker TfTracker;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *tf_last_error_message(void);

/**
 * Library version, static storage.
 */
const char *tf_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void tf_string_free(char *s);

/**
 * Builds a mask from `width * height` row-major bytes; non-zero is foreground.
 *
 * # Safety
 * `data` must point to `width * height` readable bytes; `out` must be writable.
 */
enum TfStatus tf_mask_from_bitmap(uint32_t width,
                                  uint32_t height,
                                  const uint8_t *data,
                                  struct TfMask **out);

/**
 * Writes the mask as `width * height` bytes of 0 or 1.
 *
 * # Safety
 * `mask` must be a live handle; `out` must have room for `len` bytes.
 */
enum TfStatus tf_mask_to_bitmap(const struct TfMask *mask, uint8_t *out, size_t len);

/**
 * # Safety
 * `mask` must be null or a handle from this library not yet freed.
 */
void tf_mask_free(struct TfMask *mask);

/**
 * Foreground pixel count; 0 for null.
 *
 * # Safety
 * `mask` must be null or a live handle.
 */
uint64_t tf_mask_area(const struct TfMask *mask);

/**
 * # Safety
 * `a` and `b` must be live handles; `out` must be writable.
 */
enum TfStatus tf_mask_iou(const struct TfMask *a, const struct TfMask *b, double *out);

/**
 * Minimum-cost assignment of an `n x n` row-major cost matrix; writes the
 * column of each row to `out`. Ties resolve to the lexicographically
 * smallest assignment.
 *
 * # Safety
 * `cost` must hold `n * n` doubles and `out` room for `n` entries.
 */
enum TfStatus tf_hungarian(const double *cost, size_t n, size_t *out);

/**
 * Creates a tracker. `config_json` may be null for the defaults.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be writable.
 */
enum TfStatus tf_tracker_new(const char *config_json, struct TfTracker **out);

/**
 * Registers the motion from frame `from` to frame `to = from + 1` as the
 * affine `[a, b, tx, c, d, ty]`, mapping `(x, y)` to `(a x + b y + tx, c x + d y + ty)`.
 *
 * # Safety
 * `tracker` must be live; `affine` must hold 6 doubles.
 */
enum TfStatus tf_tracker_add_warp(struct TfTracker *tracker,
                                  size_t from,
                                  size_t to,
                                  const double *affine);

/**
 * Feeds one frame of detections as a segment-set JSON object. `*out_jsonl`
 * receives the results of any window completed by this frame, one JSON line
 * per frame; it is an empty string otherwise.
 *
 * # Safety
 * `tracker` must be live; `frame_json` NUL-terminated; `out_jsonl` writable.
 */
enum TfStatus tf_tracker_push_frame_json(struct TfTracker *tracker,
                                         const char *frame_json,
                                         char **out_jsonl);

/**
 * Processes the last, partially filled window. Results as for
 * [`tf_tracker_push_frame_json`].
 *
 * # Safety
 * `tracker` must be live; `out_jsonl` writable.
 */
enum TfStatus tf_tracker_finish(struct TfTracker *tracker, char **out_jsonl);

/**
 * # Safety
 * `tracker` must be null or a handle from this library not yet freed.
 */
void tf_tracker_free(struct TfTracker *tracker);

/**
 * Whole-video run on in-memory JSON Lines: detections (one segment set per
 * frame) and warps (one per consecutive frame pair). `config_json` may be
 * null. `*out_jsonl` receives one result line per frame.
 *
 * # Safety
 * String arguments must be NUL-terminated or, for `config_json`, null;
 * `out_jsonl` must be writable.
 */
enum TfStatus tf_run_video_json(const char *detections_jsonl,
                                const char *warps_jsonl,
                                const char *config_json,
                                char **out_jsonl);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRACKFUSE_H */
