#ifndef NEWFLUENCE_H
#define NEWFLUENCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Squared-error loss `½(y − u)²`.
#define NF_LOSS_SQUARED 0

// Logistic loss with labels in {0, 1}.
#define NF_LOSS_LOGISTIC 1

// Penalty `λ‖β‖²`.
#define NF_RIDGE_SQUARED_NORM 0

// Penalty `(λ/2)‖β‖²`.
#define NF_RIDGE_HALF_SQUARED_NORM 1

// Result code of every exported function.
typedef enum NfStatus {
  NF_STATUS_OK = 0,
  NF_STATUS_NULL_POINTER = 1,
  NF_STATUS_INVALID_ARGUMENT = 2,
  NF_STATUS_DOMAIN = 3,
  NF_STATUS_SINGULAR_HESSIAN = 4,
  NF_STATUS_DEGENERATE_LEVERAGE = 5,
  NF_STATUS_NOT_CONVERGED = 6,
  NF_STATUS_PANIC = 7,
} NfStatus;

// A fitted regularized GLM together with its influence engine.
typedef struct NfModel NfModel;

// Fits a ridge-penalized GLM by damped Newton and stores the result in `*out`.
//
// `features` is row-major `n × p`; `responses` has length `n`. On failure
// `*out` is set to null.
//
// # Safety
// `features` and `responses` must point to `n·p` and `n` readable values;
// `out` must be a valid pointer to write a handle into.
enum NfStatus nf_model_fit(const double *features,
                           size_t n,
                           size_t p,
                           const double *responses,
                           uint32_t loss,
                           double lambda,
                           uint32_t ridge_convention,
                           struct NfModel **out);

// Releases a model. Passing null is a no-op.
//
// # Safety
// `model` must be null or a handle from [`nf_model_fit`] that has not been freed.
void nf_model_free(struct NfModel *model);

// Writes the number of training points and features.
//
// # Safety
// `model` must be a live handle; `n` and `p` must be writable.
enum NfStatus nf_model_dims(const struct NfModel *model, size_t *n, size_t *p);

// Copies the fitted coefficients into `beta` (length `p`).
//
// # Safety
// `model` must be a live handle; `beta` must hold `len` writable values.
enum NfStatus nf_model_beta(const struct NfModel *model, double *beta, size_t len);

// Writes the leverages `H_ii` into `h` (length `n`, may be null) and their
// sum into `df` (may be null).
//
// # Safety
// `model` must be a live handle; non-null outputs must be writable.
enum NfStatus nf_model_leverage(const struct NfModel *model, double *h, size_t len, double *df);

// Approximate influence of every training point on the loss at `(x0, y0)`.
//
// Each output (classical IF, leverage-corrected IF, one-step-Newton
// influence) has length `n` and may be null if not needed.
//
// # Safety
// `model` must be a live handle; `x0` must hold `p` readable values; non-null
// outputs must hold `len` writable values.
enum NfStatus nf_model_influence(const struct NfModel *model,
                                 const double *x0,
                                 size_t p,
                                 double y0,
                                 double *influence_if,
                                 double *influence_corrected,
                                 double *influence_new,
                                 size_t len);

// Exact leave-one-out influence of every training point on the loss at
// `(x0, y0)`. The first call refits the model `n` times; the refits are
// cached on the handle.
//
// # Safety
// `model` must be a live handle; `x0` must hold `p` readable values; `out`
// must hold `len` writable values.
enum NfStatus nf_model_true_influence(const struct NfModel *model,
                                      const double *x0,
                                      size_t p,
                                      double y0,
                                      double *out,
                                      size_t len);

// Kendall's tau-a between two equally long sequences.
//
// # Safety
// `a` and `b` must hold `len` readable values; `out` must be writable.
enum NfStatus nf_kendall_tau(const double *a, const double *b, size_t len, double *out);

// Message describing the most recent failure on this thread, or null if the
// last call succeeded. The string stays valid until the next call into this
// library on the same thread.
const char *nf_last_error(void);

// Static name of a status code; unknown codes map to "unknown status".
const char *nf_status_string(int32_t status);

#endif  /* NEWFLUENCE_H */
