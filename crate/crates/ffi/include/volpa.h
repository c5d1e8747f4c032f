/* C interface of the volpa contract-design toolkit. MIT licensed. */

#ifndef VOLPA_H
#define VOLPA_H

/* Generated from the volpa-ffi crate sources; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call through the C interface.
 */
typedef enum VpStatus {
  /**
   * The call succeeded.
   */
  VpStatus_Ok = 0,
  /**
   * A pointer, encoding, or parameter value was rejected.
   */
  VpStatus_InvalidArgument = 1,
  /**
   * The computation failed numerically, e.g. a prescribed variance level
   * is unattainable for the model.
   */
  VpStatus_Numerical = 2,
  /**
   * A panic was caught at the language boundary; the handle is still
   * valid but the requested result was not produced.
   */
  VpStatus_Panic = 3,
} VpStatus;

/**
 * Opaque model handle: a validated model together with its default control
 * grid. Create with [`vp_model_from_json`], release with [`vp_model_free`].
 */
typedef struct VpModel VpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the library. Static storage: do **not** free.
 */
const char *vp_version(void);

/**
 * Message describing the most recent failure on the calling thread, or NULL
 * if no failure has been recorded. The caller owns the returned string and
 * must release it with [`vp_string_free`].
 */
char *vp_last_error_message(void);

/**
 * Releases a string obtained from this library.
 *
 * # Safety
 * `text` must be NULL or a pointer previously returned by
 * [`vp_last_error_message`] that has not been freed yet.
 */
void vp_string_free(char *text);

/**
 * Parses a JSON model description and stores a new handle in `*out_model`.
 *
 * The JSON schema is the one the `volpa` CLI reads: either
 * `{"example": "scalar-vol" | "demand-response" | "quartic", ...}` with
 * optional parameter overrides, or `{"custom": {...}}`.
 *
 * # Safety
 * `json` must be NULL or a NUL-terminated string; `out_model` must be valid
 * for a pointer write. On failure `*out_model` is set to NULL.
 */
enum VpStatus vp_model_from_json(const char *json, struct VpModel **out_model);

/**
 * Releases a model handle. NULL is accepted and ignored.
 *
 * # Safety
 * `model` must be NULL or a handle from [`vp_model_from_json`] that has not
 * been freed yet; it must not be used afterwards.
 */
void vp_model_free(struct VpModel *model);

/**
 * Stores the dimension of the model's control vector in `*out_dim`.
 *
 * # Safety
 * `model` must be a live handle; `out_dim` must be NULL or writable.
 */
enum VpStatus vp_model_control_dim(const struct VpModel *model, uintptr_t *out_dim);

/**
 * Evaluates the model coefficients at state `(t, x)` under the control
 * vector `u` (length `u_len`): output drift, output variance `σσᵀ`, agent
 * running cost, and agent discount rate.
 *
 * # Safety
 * `model` must be a live handle; `u` must point to `u_len` doubles (NULL is
 * allowed when `u_len` is 0); each out-pointer must be NULL or writable.
 */
enum VpStatus vp_eval_coefficients(const struct VpModel *model,
                                   double t,
                                   double x,
                                   const double *u,
                                   uintptr_t u_len,
                                   double *out_drift,
                                   double *out_variance,
                                   double *out_cost,
                                   double *out_k_a);

/**
 * Evaluates the unconstrained agent Hamiltonian `H_A(t, x, y, z, γ)` on the
 * model's default control grid.
 *
 * The supremum is stored in `*out_value`. The maximizing control is copied
 * into `out_argmax` (up to `argmax_cap` components) and its full length is
 * stored in `*out_argmax_len`; pass `argmax_cap = 0` to query the length.
 *
 * # Safety
 * `model` must be a live handle; `out_argmax` must be NULL or valid for
 * `argmax_cap` writes; the remaining out-pointers must be NULL or writable.
 */
enum VpStatus vp_hamiltonian_full(const struct VpModel *model,
                                  double t,
                                  double x,
                                  double y,
                                  double z,
                                  double gamma,
                                  double *out_value,
                                  double *out_argmax,
                                  uintptr_t argmax_cap,
                                  uintptr_t *out_argmax_len);

/**
 * Evaluates the variance-constrained agent Hamiltonian at variance level
 * `s` on the model's default control grid.
 *
 * `tol_s` is the half-width of the accepted variance band; pass a
 * non-positive or non-finite value to use the model's grid-derived default.
 * When no grid point attains the band, the call still succeeds:
 * `*out_feasible` is false, `*out_value` is `-inf`, and the argmax is empty.
 * `*out_residual` receives `|σσᵀ(argmax) − s|`.
 *
 * # Safety
 * Same contract as [`vp_hamiltonian_full`], plus `out_feasible`/
 * `out_residual` must be NULL or writable.
 */
enum VpStatus vp_hamiltonian_constrained(const struct VpModel *model,
                                         double t,
                                         double x,
                                         double y,
                                         double z,
                                         double s,
                                         double tol_s,
                                         double *out_value,
                                         bool *out_feasible,
                                         double *out_argmax,
                                         uintptr_t argmax_cap,
                                         uintptr_t *out_argmax_len,
                                         double *out_residual);

/**
 * Stores in `*out_sigma` the output variance `σσᵀ` induced by the agent's
 * optimal response to the penalty pair `(z, γ)` at state `(t, x, y)`.
 *
 * # Safety
 * `model` must be a live handle; `out_sigma` must be NULL or writable.
 */
enum VpStatus vp_sigma_from_gamma(const struct VpModel *model,
                                  double t,
                                  double x,
                                  double y,
                                  double z,
                                  double gamma,
                                  double *out_sigma);

/**
 * Stores in `*out_gamma` the penalty rate γ* dual to the variance level `s`
 * at state `(t, x, y, z)`: the smallest minimizer of `H_A(γ) − ½γs` over a
 * uniform γ-grid with `n_gamma` points on `[gamma_lo, gamma_hi]`.
 *
 * Pass `n_gamma = 0` to use the default grid (60001 points on [-50, 10]).
 *
 * # Safety
 * `model` must be a live handle; `out_gamma` must be NULL or writable.
 */
enum VpStatus vp_gamma_from_sigma(const struct VpModel *model,
                                  double t,
                                  double x,
                                  double y,
                                  double z,
                                  double s,
                                  double gamma_lo,
                                  double gamma_hi,
                                  uintptr_t n_gamma,
                                  double *out_gamma);

/**
 * Runs the Legendre–Fenchel consistency check at `(t=0, x=x₀, y=ȳ, z)` and
 * reports the largest duality gap over the variance grid, whether the
 * relation holds everywhere within tolerance, and the variance level
 * attaining the largest gap.
 *
 * `s_steps` and `gamma_steps` size the scan grids; pass 0 for the defaults
 * (201 variance levels, 60001 penalty rates on [-50, 10]).
 *
 * # Safety
 * `model` must be a live handle; each out-pointer must be NULL or writable.
 */
enum VpStatus vp_duality_max_gap(const struct VpModel *model,
                                 double z,
                                 uintptr_t s_steps,
                                 uintptr_t gamma_steps,
                                 double *out_max_gap,
                                 bool *out_holds,
                                 double *out_witness_s);

/**
 * Simulates the contracted dynamics under the agent's optimal response and
 * stores the Monte Carlo estimates of both parties' objectives.
 *
 * `contract_kind` selects the contract: 0 for the penalty form, where
 * `level` is the quadratic penalty rate γ, or 1 for the first-best form,
 * where `level` is the prescribed variance Σ. `z` is the contract
 * sensitivity and `y0` the promised value; pass NaN for `y0` to use the
 * model's reservation utility. `n_paths` Euler paths with `n_steps` steps
 * are drawn from the deterministic stream seeded by `seed`.
 *
 * # Safety
 * `model` must be a live handle; each out-pointer must be NULL or writable.
 */
enum VpStatus vp_simulate_summary(const struct VpModel *model,
                                  int32_t contract_kind,
                                  double z,
                                  double level,
                                  double y0,
                                  uintptr_t n_paths,
                                  uintptr_t n_steps,
                                  uint64_t seed,
                                  double *out_agent_mean,
                                  double *out_agent_se,
                                  double *out_principal_mean,
                                  double *out_principal_se);

/**
 * Computes the value lost to the penalty-form restriction in the quartic
 * counter-example: the principal's first-best total, the best total
 * attainable through penalty contracts, and their difference.
 *
 * `s_steps` and `gamma_steps` size the scan grids (0 selects the defaults
 * 20001 and 201). `t_horizon` is the contract horizon, `x0`/`y0` the
 * initial output and promised value.
 *
 * # Safety
 * Each out-pointer must be NULL or writable.
 */
enum VpStatus vp_example3_gap(double t_horizon,
                              double x0,
                              double y0,
                              uintptr_t s_steps,
                              uintptr_t gamma_steps,
                              double *out_first_best,
                              double *out_restricted,
                              double *out_gap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLPA_H */
