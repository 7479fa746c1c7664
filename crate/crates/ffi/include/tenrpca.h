#ifndef TENRPCA_H
#define TENRPCA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `TENRPCA_STATUS_OK` is zero.
 */
typedef enum TenrpcaStatus {
  TENRPCA_STATUS_OK = 0,
  TENRPCA_STATUS_NULL_POINTER = 1,
  TENRPCA_STATUS_LENGTH_MISMATCH = 2,
  TENRPCA_STATUS_INVALID_UTF8 = 3,
  TENRPCA_STATUS_PANIC = 4,
  TENRPCA_STATUS_SHAPE_MISMATCH = 10,
  TENRPCA_STATUS_RANK_OUT_OF_RANGE = 11,
  TENRPCA_STATUS_INVALID_PARAMETER = 12,
  TENRPCA_STATUS_DIVERGED = 13,
  TENRPCA_STATUS_NUMERICAL_ERROR = 14,
  TENRPCA_STATUS_FORMAT = 15,
  TENRPCA_STATUS_IO = 16,
  TENRPCA_STATUS_JSON = 17,
} TenrpcaStatus;

typedef enum TenrpcaMode {
  TENRPCA_MODE_FRAME_WISE = 0,
  TENRPCA_MODE_HOLISTIC = 1,
} TenrpcaMode;

typedef enum TenrpcaModel {
  TENRPCA_MODEL_HOLISTIC = 0,
  TENRPCA_MODEL_PATCH_GROUP = 1,
} TenrpcaModel;

/**
 * Which volume of a solve result to copy out.
 */
typedef enum TenrpcaComponent {
  TENRPCA_COMPONENT_RECONSTRUCTION = 0,
  TENRPCA_COMPONENT_BACKGROUND = 1,
  TENRPCA_COMPONENT_FOREGROUND = 2,
  TENRPCA_COMPONENT_DISTURBANCE = 3,
} TenrpcaComponent;

/**
 * A compressive sensing operator.
 */
typedef struct TenrpcaOperator TenrpcaOperator;

/**
 * The outcome of a solve.
 */
typedef struct TenrpcaSolveResult TenrpcaSolveResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *tenrpca_last_error(void);

/**
 * Builds an operator and stores it in `*out`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum TenrpcaStatus tenrpca_operator_new(enum TenrpcaMode mode,
                                        size_t height,
                                        size_t width,
                                        size_t frames,
                                        double ratio,
                                        uint64_t seed,
                                        struct TenrpcaOperator **out);

/**
 * # Safety
 * `op` must be null or a handle from [`tenrpca_operator_new`] not yet freed.
 */
void tenrpca_operator_free(struct TenrpcaOperator *op);

/**
 * Number of measurements, or 0 for a null handle.
 *
 * # Safety
 * `op` must be null or a live operator handle.
 */
size_t tenrpca_operator_measurements(const struct TenrpcaOperator *op);

/**
 * `y = A(x)`.
 *
 * # Safety
 * Buffers must hold the stated number of doubles; `op` must be live.
 */
enum TenrpcaStatus tenrpca_operator_apply(const struct TenrpcaOperator *op,
                                          const double *x,
                                          size_t x_len,
                                          double *y,
                                          size_t y_len);

/**
 * `x = A*(y)`.
 *
 * # Safety
 * Buffers must hold the stated number of doubles; `op` must be live.
 */
enum TenrpcaStatus tenrpca_operator_adjoint(const struct TenrpcaOperator *op,
                                            const double *y,
                                            size_t y_len,
                                            double *x,
                                            size_t x_len);

/**
 * Recovers background and foreground from measurements taken with `op`.
 * `params_json` may be null for default parameters; otherwise it is a JSON
 * object with solver parameter fields.
 *
 * # Safety
 * `y` must hold `y_len` doubles, `params_json` must be null or a
 * nul-terminated string, `out` must be writable.
 */
enum TenrpcaStatus tenrpca_solve(const struct TenrpcaOperator *op,
                                 const double *y,
                                 size_t y_len,
                                 enum TenrpcaModel model,
                                 const char *params_json,
                                 struct TenrpcaSolveResult **out);

/**
 * # Safety
 * `res` must be null or a handle from [`tenrpca_solve`] not yet freed.
 */
void tenrpca_result_free(struct TenrpcaSolveResult *res);

/**
 * Copies one volume of the result into `out`, which holds `len` doubles.
 *
 * # Safety
 * `res` must be live and `out` must hold `len` doubles.
 */
enum TenrpcaStatus tenrpca_result_component(const struct TenrpcaSolveResult *res,
                                            enum TenrpcaComponent which,
                                            double *out,
                                            size_t len);

/**
 * Iterations run, or 0 for a null handle.
 *
 * # Safety
 * `res` must be null or live.
 */
size_t tenrpca_result_iterations(const struct TenrpcaSolveResult *res);

/**
 * Whether the relative-change tolerance was reached.
 *
 * # Safety
 * `res` must be null or live.
 */
bool tenrpca_result_converged(const struct TenrpcaSolveResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TENRPCA_H */
