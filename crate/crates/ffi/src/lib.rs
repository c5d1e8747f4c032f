//! C ABI for the `volpa` toolkit.
//!
//! The surface is a thin, defensive wrapper around the Rust crate:
//!
//! * [`vp_model_from_json`] parses the same JSON model description the CLI
//!   accepts and returns an opaque handle carrying the model together with
//!   its default control grid.
//! * Every fallible function returns a [`VpStatus`]. On a non-Ok status the
//!   caller can fetch a human-readable description for the current thread
//!   via [`vp_last_error_message`] and release it with [`vp_string_free`].
//! * Out-parameters may be NULL when the caller does not need that value.
//! * Panics never unwind across the boundary: every entry point catches them
//!   and reports [`VpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use volpa::duality::{
    default_gamma_grid, default_s_grid, duality_report, gamma_from_sigma, sigma_from_gamma,
};
use volpa::{
    agent_objective, example3_gap, hamiltonian_constrained, hamiltonian_full, linspace,
    model_from_json, principal_objective, simulate_cpt, simulate_fb, ContractCpt, ContractFb,
    ControlGrid, Error, ModelSpec, SimConfig,
};

/// Outcome of a call through the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VpStatus {
    /// The call succeeded.
    Ok = 0,
    /// A pointer, encoding, or parameter value was rejected.
    InvalidArgument = 1,
    /// The computation failed numerically, e.g. a prescribed variance level
    /// is unattainable for the model.
    Numerical = 2,
    /// A panic was caught at the language boundary; the handle is still
    /// valid but the requested result was not produced.
    Panic = 3,
}

/// Opaque model handle: a validated model together with its default control
/// grid. Create with [`vp_model_from_json`], release with [`vp_model_free`].
pub struct VpModel {
    model: ModelSpec,
    grid: ControlGrid,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes: Vec<u8> = msg.into();
    bytes.retain(|&b| b != 0);
    let text = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn fail(err: Error) -> VpStatus {
    let status = match err.exit_code() {
        2 => VpStatus::Numerical,
        _ => VpStatus::InvalidArgument,
    };
    set_error(err.to_string());
    status
}

fn invalid(msg: &str) -> VpStatus {
    set_error(msg);
    VpStatus::InvalidArgument
}

/// Runs `f`, converting any panic into [`VpStatus::Panic`] plus a last-error
/// message, so that unwinding never reaches the C caller.
fn guard(f: impl FnOnce() -> VpStatus) -> VpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic payload".to_string());
            set_error(format!("panic: {msg}"));
            VpStatus::Panic
        }
    }
}

/// Writes `value` through `ptr` unless `ptr` is NULL.
///
/// # Safety
/// `ptr` must be NULL or valid for a write of `T`.
unsafe fn put<T>(ptr: *mut T, value: T) {
    if !ptr.is_null() {
        unsafe { ptr.write(value) };
    }
}

/// Copies as much of `src` as fits into `dst` (capacity `cap`) and returns
/// the full length of `src`.
///
/// # Safety
/// `dst` must be NULL (then nothing is copied) or valid for `cap` writes.
unsafe fn put_slice(dst: *mut f64, cap: usize, src: &[f64]) -> usize {
    if !dst.is_null() {
        let n = cap.min(src.len());
        unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), dst, n) };
    }
    src.len()
}

/// Version string of the library. Static storage: do **not** free.
#[no_mangle]
pub extern "C" fn vp_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message describing the most recent failure on the calling thread, or NULL
/// if no failure has been recorded. The caller owns the returned string and
/// must release it with [`vp_string_free`].
#[no_mangle]
pub extern "C" fn vp_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null_mut(), |text| text.clone().into_raw())
    })
}

/// Releases a string obtained from this library.
///
/// # Safety
/// `text` must be NULL or a pointer previously returned by
/// [`vp_last_error_message`] that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn vp_string_free(text: *mut c_char) {
    if !text.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(unsafe { CString::from_raw(text) })));
    }
}

/// Parses a JSON model description and stores a new handle in `*out_model`.
///
/// The JSON schema is the one the `volpa` CLI reads: either
/// `{"example": "scalar-vol" | "demand-response" | "quartic", ...}` with
/// optional parameter overrides, or `{"custom": {...}}`.
///
/// # Safety
/// `json` must be NULL or a NUL-terminated string; `out_model` must be valid
/// for a pointer write. On failure `*out_model` is set to NULL.
#[no_mangle]
pub unsafe extern "C" fn vp_model_from_json(
    json: *const c_char,
    out_model: *mut *mut VpModel,
) -> VpStatus {
    guard(|| {
        if out_model.is_null() {
            return invalid("out_model is null");
        }
        unsafe { out_model.write(std::ptr::null_mut()) };
        if json.is_null() {
            return invalid("json is null");
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(text) => text,
            Err(_) => return invalid("json is not valid UTF-8"),
        };
        let model = match model_from_json(text) {
            Ok(model) => model,
            Err(err) => return fail(err),
        };
        let grid = match model.default_grid() {
            Ok(grid) => grid,
            Err(err) => return fail(err),
        };
        unsafe { out_model.write(Box::into_raw(Box::new(VpModel { model, grid }))) };
        VpStatus::Ok
    })
}

/// Releases a model handle. NULL is accepted and ignored.
///
/// # Safety
/// `model` must be NULL or a handle from [`vp_model_from_json`] that has not
/// been freed yet; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vp_model_free(model: *mut VpModel) {
    if !model.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(unsafe { Box::from_raw(model) })));
    }
}

/// Stores the dimension of the model's control vector in `*out_dim`.
///
/// # Safety
/// `model` must be a live handle; `out_dim` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn vp_model_control_dim(
    model: *const VpModel,
    out_dim: *mut usize,
) -> VpStatus {
    guard(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return invalid("model handle is null");
        };
        unsafe { put(out_dim, handle.grid.dim()) };
        VpStatus::Ok
    })
}

/// Evaluates the model coefficients at state `(t, x)` under the control
/// vector `u` (length `u_len`): output drift, output variance `σσᵀ`, agent
/// running cost, and agent discount rate.
///
/// # Safety
/// `model` must be a live handle; `u` must point to `u_len` doubles (NULL is
/// allowed when `u_len` is 0); each out-pointer must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn vp_eval_coefficients(
    model: *const VpModel,
    t: f64,
    x: f64,
    u: *const f64,
    u_len: usize,
    out_drift: *mut f64,
    out_variance: *mut f64,
    out_cost: *mut f64,
    out_k_a: *mut f64,
) -> VpStatus {
    guard(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return invalid("model handle is null");
        };
        let control: &[f64] = if u_len == 0 {
            &[]
        } else if u.is_null() {
            return invalid("u is null but u_len is nonzero");
        } else {
            unsafe { std::slice::from_raw_parts(u, u_len) }
        };
        match handle.model.eval_coefficients(t, x, control) {
            Ok(eval) => {
                unsafe {
                    put(out_drift, eval.drift_vec);
                    put(out_variance, eval.variance);
                    put(out_cost, eval.cost);
                    put(out_k_a, eval.k_a);
                }
                VpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Evaluates the unconstrained agent Hamiltonian `H_A(t, x, y, z, γ)` on the
/// model's default control grid.
///
/// The supremum is stored in `*out_value`. The maximizing control is copied
/// into `out_argmax` (up to `argmax_cap` components) and its full length is
/// stored in `*out_argmax_len`; pass `argmax_cap = 0` to query the length.
///
/// # Safety
/// `model` must be a live handle; `out_argmax` must be NULL or valid for
/// `argmax_cap` writes; the remaining out-pointers must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn vp_hamiltonian_full(
    model: *const VpModel,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    gamma: f64,
    out_value: *mut f64,
    out_argmax: *mut f64,
    argmax_cap: usize,
    out_argmax_len: *mut usize,
) -> VpStatus {
    guard(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return invalid("model handle is null");
        };
        match hamiltonian_full(&handle.model, t, x, y, z, gamma, &handle.grid) {
            Ok(eval) => {
                unsafe {
                    put(out_value, eval.value);
                    let len = put_slice(out_argmax, argmax_cap, &eval.argmax);
                    put(out_argmax_len, len);
                }
                VpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Evaluates the variance-constrained agent Hamiltonian at variance level
/// `s` on the model's default control grid.
///
/// `tol_s` is the half-width of the accepted variance band; pass a
/// non-positive or non-finite value to use the model's grid-derived default.
/// When no grid point attains the band, the call still succeeds:
/// `*out_feasible` is false, `*out_value` is `-inf`, and the argmax is empty.
/// `*out_residual` receives `|σσᵀ(argmax) − s|`.
///
/// # Safety
/// Same contract as [`vp_hamiltonian_full`], plus `out_feasible`/
/// `out_residual` must be NULL or writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn vp_hamiltonian_constrained(
    model: *const VpModel,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    s: f64,
    tol_s: f64,
    out_value: *mut f64,
    out_feasible: *mut bool,
    out_argmax: *mut f64,
    argmax_cap: usize,
    out_argmax_len: *mut usize,
    out_residual: *mut f64,
) -> VpStatus {
    guard(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return invalid("model handle is null");
        };
        let tol = if tol_s.is_finite() && tol_s > 0.0 {
            tol_s
        } else {
            handle.model.default_tol_s(&handle.grid)
        };
        match hamiltonian_constrained(&handle.model, t, x, y, z, s, &handle.grid, tol) {
            Ok(eval) => {
                unsafe {
                    put(out_value, eval.value);
                    put(out_feasible, eval.feasible);
                    let len = put_slice(out_argmax, argmax_cap, &eval.argmax);
                    put(out_argmax_len, len);
                    put(out_residual, eval.constraint_residual);
                }
                VpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Stores in `*out_sigma` the output variance `σσᵀ` induced by the agent's
/// optimal response to the penalty pair `(z, γ)` at state `(t, x, y)`.
///
/// # Safety
/// `model` must be a live handle; `out_sigma` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn vp_sigma_from_gamma(
    model: *const VpModel,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    gamma: f64,
    out_sigma: *mut f64,
) -> VpStatus {
    guard(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return invalid("model handle is null");
        };
        match sigma_from_gamma(&handle.model, t, x, y, z, gamma, &handle.grid) {
            Ok(sigma) => {
                unsafe { put(out_sigma, sigma) };
                VpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Stores in `*out_gamma` the penalty rate γ* dual to the variance level `s`
/// at state `(t, x, y, z)`: the smallest minimizer of `H_A(γ) − ½γs` over a
/// uniform γ-grid with `n_gamma` points on `[gamma_lo, gamma_hi]`.
///
/// Pass `n_gamma = 0` to use the default grid (60001 points on [-50, 10]).
///
/// # Safety
/// `model` must be a live handle; `out_gamma` must be NULL or writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn vp_gamma_from_sigma(
    model: *const VpModel,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    s: f64,
    gamma_lo: f64,
    gamma_hi: f64,
    n_gamma: usize,
    out_gamma: *mut f64,
) -> VpStatus {
    guard(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return invalid("model handle is null");
        };
        let gamma_grid = if n_gamma == 0 {
            default_gamma_grid()
        } else {
            linspace(gamma_lo, gamma_hi, n_gamma)
        };
        match gamma_from_sigma(&handle.model, t, x, y, z, s, &gamma_grid, &handle.grid) {
            Ok(gamma) => {
                unsafe { put(out_gamma, gamma) };
                VpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Runs the Legendre–Fenchel consistency check at `(t=0, x=x₀, y=ȳ, z)` and
/// reports the largest duality gap over the variance grid, whether the
/// relation holds everywhere within tolerance, and the variance level
/// attaining the largest gap.
///
/// `s_steps` and `gamma_steps` size the scan grids; pass 0 for the defaults
/// (201 variance levels, 60001 penalty rates on [-50, 10]).
///
/// # Safety
/// `model` must be a live handle; each out-pointer must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn vp_duality_max_gap(
    model: *const VpModel,
    z: f64,
    s_steps: usize,
    gamma_steps: usize,
    out_max_gap: *mut f64,
    out_holds: *mut bool,
    out_witness_s: *mut f64,
) -> VpStatus {
    guard(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return invalid("model handle is null");
        };
        let s_steps = if s_steps == 0 { 201 } else { s_steps };
        let gamma_steps = if gamma_steps == 0 { 60_001 } else { gamma_steps };
        if s_steps < 2 || gamma_steps < 2 {
            return invalid("s_steps and gamma_steps must be ≥ 2 (or 0 for the default)");
        }
        let run = || -> volpa::Result<(f64, bool, f64)> {
            let x = handle.model.x0;
            let y = handle.model.reservation_level()?;
            let gamma_grid = linspace(-50.0, 10.0, gamma_steps);
            let s_grid =
                default_s_grid(&handle.model, 0.0, x, y, z, &gamma_grid, &handle.grid, s_steps)?;
            let tol_s = handle.model.default_tol_s(&handle.grid);
            let report = duality_report(
                &handle.model,
                0.0,
                x,
                y,
                z,
                &s_grid,
                &gamma_grid,
                &handle.grid,
                tol_s,
                None,
            )?;
            Ok((report.max_gap, report.holds, report.witness_s))
        };
        match run() {
            Ok((max_gap, holds, witness_s)) => {
                unsafe {
                    put(out_max_gap, max_gap);
                    put(out_holds, holds);
                    put(out_witness_s, witness_s);
                }
                VpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Simulates the contracted dynamics under the agent's optimal response and
/// stores the Monte Carlo estimates of both parties' objectives.
///
/// `contract_kind` selects the contract: 0 for the penalty form, where
/// `level` is the quadratic penalty rate γ, or 1 for the first-best form,
/// where `level` is the prescribed variance Σ. `z` is the contract
/// sensitivity and `y0` the promised value; pass NaN for `y0` to use the
/// model's reservation utility. `n_paths` Euler paths with `n_steps` steps
/// are drawn from the deterministic stream seeded by `seed`.
///
/// # Safety
/// `model` must be a live handle; each out-pointer must be NULL or writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn vp_simulate_summary(
    model: *const VpModel,
    contract_kind: i32,
    z: f64,
    level: f64,
    y0: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    out_agent_mean: *mut f64,
    out_agent_se: *mut f64,
    out_principal_mean: *mut f64,
    out_principal_se: *mut f64,
) -> VpStatus {
    guard(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return invalid("model handle is null");
        };
        let y0 = if y0.is_nan() { handle.model.reservation } else { y0 };
        let cfg = SimConfig::new(n_paths, n_steps, seed, n_steps.clamp(1, 100));
        let ensemble = match contract_kind {
            0 => {
                let contract = ContractCpt::constant(y0, z, level);
                simulate_cpt(&handle.model, &contract, &cfg, &handle.grid)
            }
            1 => {
                let contract = ContractFb::constant(y0, z, level);
                let tol_s = handle.model.default_tol_s(&handle.grid);
                simulate_fb(&handle.model, &contract, &cfg, &handle.grid, tol_s)
            }
            _ => return invalid("contract_kind must be 0 (penalty form) or 1 (first-best)"),
        };
        let ensemble = match ensemble {
            Ok(ensemble) => ensemble,
            Err(err) => return fail(err),
        };
        if ensemble.n_feasible() == 0 {
            return fail(Error::Infeasible(
                "every simulated path was infeasible for the prescribed variance level"
                    .to_string(),
            ));
        }
        let agent = agent_objective(&handle.model, &ensemble);
        let principal = principal_objective(&handle.model, &ensemble);
        unsafe {
            put(out_agent_mean, agent.mean);
            put(out_agent_se, agent.std_error);
            put(out_principal_mean, principal.mean);
            put(out_principal_se, principal.std_error);
        }
        VpStatus::Ok
    })
}

/// Computes the value lost to the penalty-form restriction in the quartic
/// counter-example: the principal's first-best total, the best total
/// attainable through penalty contracts, and their difference.
///
/// `s_steps` and `gamma_steps` size the scan grids (0 selects the defaults
/// 20001 and 201). `t_horizon` is the contract horizon, `x0`/`y0` the
/// initial output and promised value.
///
/// # Safety
/// Each out-pointer must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn vp_example3_gap(
    t_horizon: f64,
    x0: f64,
    y0: f64,
    s_steps: usize,
    gamma_steps: usize,
    out_first_best: *mut f64,
    out_restricted: *mut f64,
    out_gap: *mut f64,
) -> VpStatus {
    guard(|| {
        let s_steps = if s_steps == 0 { 20_001 } else { s_steps };
        let gamma_steps = if gamma_steps == 0 { 201 } else { gamma_steps };
        let solution = match example3_gap(t_horizon, x0, y0, s_steps, gamma_steps) {
            Ok(solution) => solution,
            Err(err) => return fail(err),
        };
        let first_best = solution.get("first_best_total").and_then(|q| q.solver);
        let restricted = solution.get("restricted_total").and_then(|q| q.solver);
        match (first_best, restricted) {
            (Some(first_best), Some(restricted)) => {
                unsafe {
                    put(out_first_best, first_best);
                    put(out_restricted, restricted);
                    put(out_gap, first_best - restricted);
                }
                VpStatus::Ok
            }
            _ => {
                set_error("solution is missing the contract totals");
                VpStatus::Numerical
            }
        }
    })
}
