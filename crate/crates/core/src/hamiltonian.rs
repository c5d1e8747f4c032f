//! Running rewards and grid-search Hamiltonians.
//!
//! Two reward functionals drive everything downstream. The full (second
//! best / CPT) reward prices quadratic variation through the sensitivity
//! gamma:
//!
//! ```text
//!     h_A(t, x, y, z, gamma, u) = sigma lambda . z + gamma/2 sigma sigma^T
//!                                 - c_A - k_A y
//! ```
//!
//! while the constrained (first best) reward drops the gamma term and is
//! instead maximized over controls whose variance hits a target S within
//! a tolerance band:
//!
//! ```text
//!     h°_A(t, x, y, z, u) = sigma lambda . z - c_A - k_A y .
//! ```
//!
//! Both suprema are computed by exhaustive grid search with deterministic,
//! lexicographically-first tie-breaking. The demand-response model's
//! reward is separable across control axes, so its supremum is assembled
//! from per-axis scans; this is an exact algebraic rewrite of the product
//! scan that would otherwise visit ~10^13 lattice points.

use crate::error::{Error, Result};
use crate::grid::ControlGrid;
use crate::model::{ModelKind, ModelSpec};

/// Result of a grid maximization of h_A or h°_A.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HamiltonianEval {
    /// The supremum over the grid; `-inf` for infeasible constrained calls.
    pub value: f64,
    /// First lattice point (lexicographic order) attaining the supremum;
    /// empty when infeasible.
    pub argmax: Vec<f64>,
    /// `|sigma sigma^T(argmax) - S|` for constrained calls, 0 for full
    /// calls, `+inf` when infeasible.
    pub constraint_residual: f64,
    /// Whether any grid point with finite reward met the constraint
    /// (always true for full calls).
    pub feasible: bool,
}

impl HamiltonianEval {
    fn infeasible() -> Self {
        HamiltonianEval {
            value: f64::NEG_INFINITY,
            argmax: Vec::new(),
            constraint_residual: f64::INFINITY,
            feasible: false,
        }
    }
}

pub(crate) fn check_grid(model: &ModelSpec, grid: &ControlGrid, op: &'static str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid(op));
    }
    if grid.dim() != model.control_box.len() {
        return Err(Error::config(format!(
            "{op}: grid has {} axes, control box has {}",
            grid.dim(),
            model.control_box.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pointwise rewards
// ---------------------------------------------------------------------------

/// The full running reward h_A at a single control.
pub fn running_reward_full(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    gamma: f64,
    u: &[f64],
) -> Result<f64> {
    model.check_control(u)?;
    Ok(reward_full_unchecked(model, t, x, y, z, gamma, u))
}

/// The constrained running reward h°_A at a single control.
pub fn running_reward_constrained(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    u: &[f64],
) -> Result<f64> {
    model.check_control(u)?;
    Ok(reward_constrained_unchecked(model, t, x, y, z, u))
}

pub(crate) fn reward_full_unchecked(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    gamma: f64,
    u: &[f64],
) -> f64 {
    let c = model.coeffs(t, x, u);
    c.drift * z + 0.5 * gamma * c.variance - c.cost - c.k_a * y
}

pub(crate) fn reward_constrained_unchecked(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    u: &[f64],
) -> f64 {
    let c = model.coeffs(t, x, u);
    c.drift * z - c.cost - c.k_a * y
}

// ---------------------------------------------------------------------------
// Full Hamiltonian H_A
// ---------------------------------------------------------------------------

/// Maximizes h_A over the grid: the (second best) Hamiltonian H_A and its
/// maximizer u*.
pub fn hamiltonian_full(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    gamma: f64,
    grid: &ControlGrid,
) -> Result<HamiltonianEval> {
    check_grid(model, grid, "hamiltonian_full")?;
    let argmax = match model.kind() {
        ModelKind::DemandResponse(p) => {
            let d = p.dim();
            let mut argmax = Vec::with_capacity(2 * d);
            for k in 0..d {
                // a-axis objective: -z a - a^2 / (2 mu_k)
                let (_, a) = axis_max(&grid.axes()[k], |a| -z * a - a * a / (2.0 * p.mus[k]));
                argmax.push(a);
            }
            for k in 0..d {
                // b-axis objective: gamma/2 sigma_k^2 b - sigma_k^2 / (2 lambda_k b)
                let s2 = p.sigmas[k] * p.sigmas[k];
                let (_, b) = axis_max(&grid.axes()[d + k], |b| {
                    0.5 * gamma * s2 * b - s2 / (2.0 * p.lambdas[k] * b)
                });
                argmax.push(b);
            }
            argmax
        }
        _ => {
            let mut best = f64::NEG_INFINITY;
            let mut best_flat = 0usize;
            grid.for_each_point(|flat, u| {
                let r = reward_full_unchecked(model, t, x, y, z, gamma, u);
                if r > best {
                    best = r;
                    best_flat = flat;
                }
            });
            grid.point(best_flat)
        }
    };
    let value = reward_full_unchecked(model, t, x, y, z, gamma, &argmax);
    Ok(HamiltonianEval { value, argmax, constraint_residual: 0.0, feasible: true })
}

/// Strict-`>` scan over one ascending axis: first maximizer wins ties.
/// NaN objective values are never selected.
fn axis_max(axis: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = axis[0];
    for &v in axis {
        let r = f(v);
        if r > best {
            best = r;
            arg = v;
        }
    }
    (best, arg)
}

// ---------------------------------------------------------------------------
// Constrained Hamiltonian H°_A
// ---------------------------------------------------------------------------

/// Maximizes h°_A over grid controls whose variance lies within `tol_s`
/// of the target `s`: the (first best) Hamiltonian H°_A and its maximizer
/// u°. Infeasibility — no grid point in the band, or only bands of
/// infinite cost — is a reported state, not an error.
pub fn hamiltonian_constrained(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    s: f64,
    grid: &ControlGrid,
    tol_s: f64,
) -> Result<HamiltonianEval> {
    check_grid(model, grid, "hamiltonian_constrained")?;
    if s.is_nan() || s < 0.0 {
        return Err(Error::config(format!("target variance S = {s} must be >= 0")));
    }
    if tol_s.is_nan() || tol_s <= 0.0 {
        return Err(Error::config(format!("tol_S = {tol_s} must be > 0")));
    }

    let argmax = match model.kind() {
        ModelKind::DemandResponse(p) => {
            match demand_response_band_argmax(p, grid, z, s, tol_s) {
                Some(a) => a,
                None => return Ok(HamiltonianEval::infeasible()),
            }
        }
        _ => {
            let mut best = f64::NEG_INFINITY;
            let mut best_flat = usize::MAX;
            grid.for_each_point(|flat, u| {
                let variance = model.coeffs(t, x, u).variance;
                if (variance - s).abs() <= tol_s {
                    let r = reward_constrained_unchecked(model, t, x, y, z, u);
                    if r > best {
                        best = r;
                        best_flat = flat;
                    }
                }
            });
            if best_flat == usize::MAX || !best.is_finite() {
                return Ok(HamiltonianEval::infeasible());
            }
            grid.point(best_flat)
        }
    };

    let value = reward_constrained_unchecked(model, t, x, y, z, &argmax);
    if !value.is_finite() {
        return Ok(HamiltonianEval::infeasible());
    }
    let residual = (model.coeffs(t, x, &argmax).variance - s).abs();
    Ok(HamiltonianEval { value, argmax, constraint_residual: residual, feasible: true })
}

/// Band maximizer for the separable demand-response model.
///
/// The a-part of h°_A does not touch the variance, so each a-axis is
/// maximized freely. On the b-axes the reward `-sum sigma_k^2/(2 lambda_k
/// b_k)` is strictly increasing in every b_k, so for a fixed b_1 the best
/// in-band partner is the largest grid b_2 inside the variance window
/// (and in one dimension, the largest in-band b_1). Returns `None` when
/// the band is empty or only reaches infinite-cost points.
fn demand_response_band_argmax(
    p: &crate::model::DemandResponseParams,
    grid: &ControlGrid,
    z: f64,
    s: f64,
    tol_s: f64,
) -> Option<Vec<f64>> {
    let d = p.dim();
    let mut prefix = Vec::with_capacity(2 * d);
    for k in 0..d {
        let (_, a) = axis_max(&grid.axes()[k], |a| -z * a - a * a / (2.0 * p.mus[k]));
        prefix.push(a);
    }
    let s2: Vec<f64> = p.sigmas.iter().map(|v| v * v).collect();

    let b_cost = |k: usize, b: f64| -s2[k] / (2.0 * p.lambdas[k] * b);

    match d {
        1 => {
            let axis = &grid.axes()[1];
            let lo = (s - tol_s) / s2[0];
            let hi = (s + tol_s) / s2[0];
            let b = largest_in_window(axis, lo, hi)?;
            if b_cost(0, b).is_finite() {
                prefix.push(b);
                Some(prefix)
            } else {
                None
            }
        }
        _ => {
            let b1_axis = &grid.axes()[d];
            let b2_axis = &grid.axes()[d + 1];
            let mut best = f64::NEG_INFINITY;
            let mut best_pair: Option<(f64, f64)> = None;
            for &b1 in b1_axis {
                let rem_lo = (s - tol_s - s2[0] * b1) / s2[1];
                let rem_hi = (s + tol_s - s2[0] * b1) / s2[1];
                let Some(b2) = largest_in_window(b2_axis, rem_lo, rem_hi) else {
                    continue;
                };
                let r = b_cost(0, b1) + b_cost(1, b2);
                if r > best {
                    best = r;
                    best_pair = Some((b1, b2));
                }
            }
            let (b1, b2) = best_pair?;
            if !best.is_finite() {
                return None;
            }
            prefix.push(b1);
            prefix.push(b2);
            Some(prefix)
        }
    }
}

/// Largest axis value inside `[lo, hi]`, if any (axis ascending).
fn largest_in_window(axis: &[f64], lo: f64, hi: f64) -> Option<f64> {
    // first index with value > hi; the candidate sits just before it
    let end = axis.partition_point(|&v| v <= hi);
    if end == 0 {
        return None;
    }
    let candidate = axis[end - 1];
    (candidate >= lo).then_some(candidate)
}

// ---------------------------------------------------------------------------
// Local discretization error estimate
// ---------------------------------------------------------------------------

/// Empirical grid-resolution error bound `2 L delta` near a control:
/// per axis, the largest finite one-step reward difference in a window
/// around `anchor`, doubled, summed over axes. `gamma` selects the reward
/// (full reward at that gamma); used to budget tolerances for duality
/// checks. Windows avoid the infinite-cost faces automatically because
/// non-finite differences are skipped.
pub(crate) fn local_resolution_error(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    gamma: f64,
    grid: &ControlGrid,
    anchor: &[f64],
) -> f64 {
    const WINDOW: usize = 20;
    let mut eps = 0.0;
    let mut point = anchor.to_vec();
    for (k, axis) in grid.axes().iter().enumerate() {
        if axis.len() < 2 {
            continue;
        }
        let pos = axis.partition_point(|&v| v < anchor[k]).min(axis.len() - 1);
        let lo = pos.saturating_sub(WINDOW);
        let hi = (pos + WINDOW).min(axis.len() - 1);
        let mut prev: Option<f64> = None;
        let mut max_diff = 0.0f64;
        for &v in &axis[lo..=hi] {
            point[k] = v;
            let r = reward_full_unchecked(model, t, x, y, z, gamma, &point);
            if let Some(p) = prev {
                let d = (r - p).abs();
                if d.is_finite() && d > max_diff {
                    max_diff = d;
                }
            }
            prev = r.is_finite().then_some(r);
        }
        point[k] = anchor[k];
        eps += 2.0 * max_diff;
    }
    eps
}
