#ifndef PVGADF_H
#define PVGADF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Values in one feature tensor (`50 x 50 x 2`, channel-last).
 */
#define PVG_FEATURE_LEN 5000

typedef enum PvgStatus {
  PVG_STATUS_OK = 0,
  PVG_STATUS_NULL_POINTER = 1,
  PVG_STATUS_INVALID_ARGUMENT = 2,
  PVG_STATUS_BUFFER_TOO_SMALL = 3,
  PVG_STATUS_CONVERGENCE = 4,
  PVG_STATUS_OUT_OF_RANGE = 5,
  PVG_STATUS_IO = 6,
  PVG_STATUS_FORMAT = 7,
  PVG_STATUS_PANIC = 8,
} PvgStatus;

typedef enum PvgStrategy {
  PVG_STRATEGY_NORMAL = 0,
  PVG_STRATEGY_GLOBAL = 1,
  PVG_STRATEGY_ISC_VOC = 2,
} PvgStrategy;

/**
 * A 3-series x 2-parallel Shell SP-70 array.
 */
typedef struct PvgArray PvgArray;

/**
 * A trained classifier.
 */
typedef struct PvgModel PvgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *pvg_last_error_message(void);

/**
 * Static name of fault class `id` (0..14), or null.
 */
const char *pvg_class_name(uint16_t id);

/**
 * New array with or without blocking diodes. Free with [`pvg_array_free`].
 */
struct PvgArray *pvg_array_new(bool blocking_diodes);

/**
 * # Safety
 * `array` must come from [`pvg_array_new`] and not be used afterwards.
 */
void pvg_array_free(struct PvgArray *array);

/**
 * Simulates `n_points` samples of the array's I-V curve under fault class
 * `class_id` with severities drawn from `seed`, at irradiance `g` (W/m2)
 * and module temperature `t_kelvin`.
 *
 * # Safety
 * `v_out` and `i_out` must each point to `n_points` writable doubles.
 */
enum PvgStatus pvg_array_iv_curve(const struct PvgArray *array,
                                  uint16_t class_id,
                                  uint64_t seed,
                                  double g,
                                  double t_kelvin,
                                  size_t n_points,
                                  double *v_out,
                                  double *i_out);

/**
 * Two-channel feature tensor of a measured curve (`n` points, ascending
 * voltage) at condition (`g`, `t_kelvin`). `limit_isc`/`limit_voc` are read
 * only for the Global strategy. Writes [`PVG_FEATURE_LEN`] floats.
 *
 * # Safety
 * `v` and `i` must point to `n` doubles; `out` to `out_len` floats.
 */
enum PvgStatus pvg_feature(const struct PvgArray *array,
                           const double *v,
                           const double *i,
                           size_t n,
                           double g,
                           double t_kelvin,
                           enum PvgStrategy strategy,
                           double limit_isc,
                           double limit_voc,
                           float *out,
                           size_t out_len);

/**
 * GADF of a series already scaled to `[0, 1]`; writes `n * n` doubles.
 *
 * # Safety
 * `x` must point to `n` doubles and `out` to `n * n` writable doubles.
 */
enum PvgStatus pvg_gadf(const double *x, size_t n, double *out);

/**
 * Loads a weight checkpoint into `*out`. Free with [`pvg_model_free`].
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum PvgStatus pvg_model_load(const char *path, struct PvgModel **out);

/**
 * # Safety
 * `model` must come from [`pvg_model_load`] and not be used afterwards.
 */
void pvg_model_free(struct PvgModel *model);

/**
 * Number of output classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t pvg_model_n_classes(const struct PvgModel *model);

/**
 * Expected input length `size * size * channels`, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t pvg_model_input_len(const struct PvgModel *model);

/**
 * Classifies one channel-last input. Writes the class index to `*class_out`
 * and, when `probs` is not null, `probs_len >= n_classes` probabilities.
 *
 * # Safety
 * `input` must point to `input_len` floats; `probs` to `probs_len` floats.
 */
enum PvgStatus pvg_model_predict(const struct PvgModel *model,
                                 const float *input,
                                 size_t input_len,
                                 size_t *class_out,
                                 float *probs,
                                 size_t probs_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PVGADF_H */
