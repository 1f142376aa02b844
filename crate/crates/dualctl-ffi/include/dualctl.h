#ifndef DUALCTL_H
#define DUALCTL_H

#pragma once

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes.
 */
typedef enum DcStatus {
  DC_STATUS_OK = 0,
  DC_STATUS_NULL_POINTER = 1,
  DC_STATUS_DIMENSION = 2,
  DC_STATUS_INVALID_ARGUMENT = 3,
  DC_STATUS_INFEASIBLE = 4,
  DC_STATUS_UNCERTAINTY_TOO_LARGE = 5,
  DC_STATUS_SOLVER = 6,
  DC_STATUS_SINGULAR = 7,
  DC_STATUS_BUFFER_TOO_SMALL = 8,
  DC_STATUS_PANIC = 9,
  DC_STATUS_OTHER = 10,
} DcStatus;

/**
 * Gain-scheduled controller.
 */
typedef struct DcController DcController;

/**
 * Exploration plan: frequency grid, amplitudes and certified excitation.
 */
typedef struct DcPlan DcPlan;

/**
 * Gaussian prior over (A, B).
 */
typedef struct DcPrior DcPrior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL terminated)
 * and returns the full message length; 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t dc_last_error(char *buf, size_t len);

/**
 * Creates a prior with center (Â, B̂) (n_x × n_x and n_x × 1) and
 * credibility shape D₀ ((n_x + 1) × (n_x + 1)).
 *
 * # Safety
 * Array arguments must hold the stated number of doubles; `out` must be valid.
 */
enum DcStatus dc_prior_new(size_t n_x,
                           const double *a_hat,
                           const double *b_hat,
                           const double *d0,
                           double delta,
                           struct DcPrior **out);

/**
 * Releases a prior.
 *
 * # Safety
 * `p` must come from [`dc_prior_new`] and not be used afterwards.
 */
void dc_prior_free(struct DcPrior *p);

/**
 * Chi-squared critical value c_δ of a prior.
 *
 * # Safety
 * `p` and `out` must be valid.
 */
enum DcStatus dc_prior_c_delta(const struct DcPrior *p, double *out);

/**
 * Minimal-energy exploration plan guaranteeing D_T ⪰ `goal` with the
 * scenario constants (seeded) and the L-iteration.
 *
 * # Safety
 * `omegas` holds `n_omega` values, `goal` (n_x + 1)² values row-major; `out` valid.
 */
enum DcStatus dc_explore(const struct DcPrior *prior,
                         size_t horizon,
                         const double *omegas,
                         size_t n_omega,
                         double sigma_w,
                         const double *goal,
                         double eps,
                         uint64_t seed,
                         struct DcPlan **out);

/**
 * Joint exploration plan and controller for the ℓ₂-gain level `gamma_p` on
 * the channel z = [x; u].
 *
 * # Safety
 * `omegas` holds `n_omega` values; `plan_out` and `ctrl_out` valid.
 */
enum DcStatus dc_dual(const struct DcPrior *prior,
                      size_t horizon,
                      const double *omegas,
                      size_t n_omega,
                      double sigma_w,
                      double gamma_p,
                      uint64_t seed,
                      struct DcPlan **plan_out,
                      struct DcController **ctrl_out);

/**
 * Number of spectral lines of a plan.
 *
 * # Safety
 * `plan` must be valid or null.
 */
size_t dc_plan_len(const struct DcPlan *plan);

/**
 * Energy bound γ_e of a plan.
 *
 * # Safety
 * `plan` and `out` must be valid.
 */
enum DcStatus dc_plan_gamma_e(const struct DcPlan *plan, double *out);

/**
 * Copies the line amplitudes into `out` (capacity `cap`).
 *
 * # Safety
 * `out` must be valid for `cap` doubles.
 */
enum DcStatus dc_plan_amplitudes(const struct DcPlan *plan, double *out, size_t cap);

/**
 * Copies the certified excitation D̄_T (row-major, (n_x + 1)²) into `out`.
 *
 * # Safety
 * `out` must be valid for `cap` doubles.
 */
enum DcStatus dc_plan_excitation(const struct DcPlan *plan, double *out, size_t cap);

/**
 * Writes the T input samples u_k of a plan into `out`.
 *
 * # Safety
 * `out` must be valid for `cap` doubles.
 */
enum DcStatus dc_plan_input(const struct DcPlan *plan, double *out, size_t cap);

/**
 * Releases a plan.
 *
 * # Safety
 * `plan` must come from this library and not be used afterwards.
 */
void dc_plan_free(struct DcPlan *plan);

/**
 * Explicit feedback K (1 × n_x) at the scheduling point (Ã, B̃).
 *
 * # Safety
 * `a_tilde` holds n_x², `b_tilde` n_x and `k_out` at least n_x doubles.
 */
enum DcStatus dc_controller_gain(const struct DcController *ctrl,
                                 const struct DcPrior *prior,
                                 const double *a_tilde,
                                 const double *b_tilde,
                                 double *k_out,
                                 size_t cap);

/**
 * Releases a controller.
 *
 * # Safety
 * `ctrl` must come from this library and not be used afterwards.
 */
void dc_controller_free(struct DcController *ctrl);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALCTL_H */
