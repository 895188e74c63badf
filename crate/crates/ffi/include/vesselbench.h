/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef VESSELBENCH_H
#define VESSELBENCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum VbStatus {
  VB_STATUS_OK = 0,
  VB_STATUS_NULL_POINTER = 1,
  VB_STATUS_IO = 2,
  VB_STATUS_FORMAT = 3,
  VB_STATUS_SHAPE_MISMATCH = 4,
  VB_STATUS_INVALID_ARGUMENT = 5,
  VB_STATUS_BUFFER_TOO_SMALL = 6,
  VB_STATUS_PANIC = 7,
} VbStatus;

/**
 * Binary mask, values 0/1.
 */
typedef struct VbLabel VbLabel;

/**
 * Intensity volume.
 */
typedef struct VbVolume VbVolume;

typedef struct VbClDiceReport {
  double tprec;
  double tsens;
  double cldice;
  double dice;
} VbClDiceReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *vb_last_error(void);

/**
 * Library version as a static string.
 */
const char *vb_version(void);

/**
 * Builds a label from `shape[0]*shape[1]*shape[2]` bytes; nonzero is
 * foreground.
 *
 * # Safety
 * `shape` points to 3 values, `data` to `len` bytes, `out` is writable.
 */
enum VbStatus vb_label_new(const size_t *shape,
                           const uint8_t *data,
                           size_t len,
                           struct VbLabel **out);

/**
 * # Safety
 * `path` is a NUL-terminated string, `out` is writable.
 */
enum VbStatus vb_label_read(const char *path, struct VbLabel **out);

/**
 * # Safety
 * `label` is a live handle, `path` a NUL-terminated string.
 */
enum VbStatus vb_label_write(const struct VbLabel *label, const char *path);

/**
 * # Safety
 * `label` is a live handle, `shape` points to 3 writable values.
 */
enum VbStatus vb_label_shape(const struct VbLabel *label, size_t *shape);

/**
 * Number of foreground voxels, or 0 for a null handle.
 *
 * # Safety
 * `label` is null or a live handle.
 */
size_t vb_label_count(const struct VbLabel *label);

/**
 * Copies the voxels into `buf`, which must hold at least the voxel count.
 *
 * # Safety
 * `label` is a live handle, `buf` points to `len` writable bytes.
 */
enum VbStatus vb_label_copy(const struct VbLabel *label, uint8_t *buf, size_t len);

/**
 * # Safety
 * `label` is null or a handle not yet freed.
 */
void vb_label_free(struct VbLabel *label);

/**
 * # Safety
 * `path` is a NUL-terminated string, `out` is writable.
 */
enum VbStatus vb_volume_read(const char *path, struct VbVolume **out);

/**
 * # Safety
 * `volume` is a live handle, `shape` points to 3 writable values.
 */
enum VbStatus vb_volume_shape(const struct VbVolume *volume, size_t *shape);

/**
 * # Safety
 * `volume` is a live handle, `buf` points to `len` writable floats.
 */
enum VbStatus vb_volume_copy(const struct VbVolume *volume, float *buf, size_t len);

/**
 * # Safety
 * `volume` is null or a handle not yet freed.
 */
void vb_volume_free(struct VbVolume *volume);

/**
 * Generates a phantom. `config_json` may be null for defaults; missing keys
 * take their defaults.
 *
 * # Safety
 * `config_json` is null or NUL-terminated; both outputs are writable.
 */
enum VbStatus vb_phantom_generate(const char *config_json,
                                  struct VbVolume **image_out,
                                  struct VbLabel **label_out);

/**
 * # Safety
 * Both handles are live and `out` is writable.
 */
enum VbStatus vb_dice(const struct VbLabel *pred, const struct VbLabel *gt, double *out);

/**
 * # Safety
 * Both handles are live and `out` is writable.
 */
enum VbStatus vb_cldice(const struct VbLabel *pred,
                        const struct VbLabel *gt,
                        struct VbClDiceReport *out);

/**
 * # Safety
 * `mask` is a live handle and `out` is writable.
 */
enum VbStatus vb_skeletonize(const struct VbLabel *mask, struct VbLabel **out);

/**
 * Applies `erosion`, `dilation` or `removed`; `level` (1..=3) is read only
 * for `removed`, as is `seed`.
 *
 * # Safety
 * `label` is a live handle, `kind` NUL-terminated, `out` writable.
 */
enum VbStatus vb_degrade(const struct VbLabel *label,
                         const char *kind,
                         uint8_t level,
                         uint64_t seed,
                         struct VbLabel **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VESSELBENCH_H */
