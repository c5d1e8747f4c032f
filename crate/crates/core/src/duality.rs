//! Legendre–Fenchel machinery linking the two Hamiltonians.
//!
//! The link identity writes the full Hamiltonian as a conjugate of the
//! constrained one over achievable variance levels,
//!
//! ```text
//!     H_A(gamma) = sup_S { H°_A(S) + gamma S / 2 },
//! ```
//!
//! and the duality test asks whether conjugating back recovers H°_A:
//!
//! ```text
//!     H°_A(S)  =?  inf_gamma { H_A(gamma) - gamma S / 2 }.
//! ```
//!
//! The right-hand side (the biconjugate) is the concave upper envelope of
//! H°_A in S, so the test holds exactly when H°_A is concave in S. The
//! gap `biconjugate - H°_A` is therefore non-negative up to grid noise
//! and strictly positive where concavity fails.
//!
//! Evaluating H_A on a dense gamma grid never re-runs the control scan:
//! each grid control contributes a line `base(u) + gamma var(u) / 2`, the
//! upper envelope of lines is attained on the upper convex hull of the
//! (variance, base) point cloud, and an ascending gamma sweep walks that
//! hull left to right in one pass. For the separable demand-response
//! model the hull is built per b-axis and the envelopes are summed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{linspace, ControlGrid};
use crate::hamiltonian::{
    hamiltonian_constrained, hamiltonian_full, local_resolution_error,
};
use crate::model::{ModelKind, ModelSpec};

/// Slack used when selecting the smallest gamma attaining a minimum.
const SELECTOR_SLACK: f64 = 1e-12;

/// Default gamma grid: [-50, 10] in steps of 1e-3.
pub fn default_gamma_grid() -> Vec<f64> {
    linspace(-50.0, 10.0, 60_001)
}

// ---------------------------------------------------------------------------
// H_A on a gamma grid via hull walks
// ---------------------------------------------------------------------------

/// Cached evaluations of H_A over an ascending gamma grid at fixed
/// (t, x, y, z).
#[derive(Debug, Clone)]
pub struct GammaTable {
    pub gammas: Vec<f64>,
    pub values: Vec<f64>,
}

/// Points (v, base) on the upper convex hull, v strictly ascending and
/// chord slopes strictly decreasing.
struct Hull {
    vs: Vec<f64>,
    bases: Vec<f64>,
}

impl Hull {
    /// Builds the upper hull from unsorted (variance, base) pairs,
    /// ignoring non-finite bases and keeping the best base per variance.
    fn build(mut pairs: Vec<(f64, f64)>) -> Hull {
        pairs.retain(|&(v, b)| v.is_finite() && b.is_finite());
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut vs: Vec<f64> = Vec::new();
        let mut bases: Vec<f64> = Vec::new();
        for (v, base) in pairs {
            if vs.last() == Some(&v) {
                // same variance: sorted order guarantees base is the max so far
                *bases.last_mut().unwrap() = base;
                // re-examine concavity with the updated base
                while vs.len() >= 3 && !Self::keeps(&vs, &bases) {
                    let n = vs.len();
                    vs.remove(n - 2);
                    bases.remove(n - 2);
                }
                continue;
            }
            vs.push(v);
            bases.push(base);
            while vs.len() >= 3 && !Self::keeps(&vs, &bases) {
                let n = vs.len();
                vs.remove(n - 2);
                bases.remove(n - 2);
            }
        }
        Hull { vs, bases }
    }

    /// True when the second-to-last point lies strictly above the chord
    /// of its neighbours (i.e. it belongs to the upper hull).
    fn keeps(vs: &[f64], bases: &[f64]) -> bool {
        let n = vs.len();
        let (v0, b0) = (vs[n - 3], bases[n - 3]);
        let (v1, b1) = (vs[n - 2], bases[n - 2]);
        let (v2, b2) = (vs[n - 1], bases[n - 1]);
        (b1 - b0) * (v2 - v0) > (b2 - b0) * (v1 - v0)
    }

    /// Adds `base + gamma v / 2` envelope values for each ascending gamma
    /// into `acc` (one pointer walk over the hull).
    fn accumulate(&self, gammas: &[f64], acc: &mut [f64]) {
        if self.vs.is_empty() {
            acc.iter_mut().for_each(|a| *a = f64::NEG_INFINITY);
            return;
        }
        let line = |j: usize, g: f64| self.bases[j] + 0.5 * g * self.vs[j];
        let mut j = 0usize;
        for (g, a) in gammas.iter().zip(acc.iter_mut()) {
            while j + 1 < self.vs.len() && line(j + 1, *g) >= line(j, *g) {
                j += 1;
            }
            *a += line(j, *g);
        }
    }
}

fn check_gamma_grid(gamma_grid: &[f64]) -> Result<()> {
    if gamma_grid.is_empty() {
        return Err(Error::EmptyGrid("gamma grid"));
    }
    if gamma_grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::config("gamma grid contains a non-finite value".to_string()));
    }
    if gamma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(
            "gamma grid values must be strictly ascending".to_string(),
        ));
    }
    Ok(())
}

/// Evaluates H_A(gamma) for every gamma of an ascending grid, sharing
/// one control-grid pass across all gamma values.
pub fn hamiltonian_full_table(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    gamma_grid: &[f64],
    grid: &ControlGrid,
) -> Result<GammaTable> {
    check_gamma_grid(gamma_grid)?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid("hamiltonian_full_table"));
    }
    if grid.dim() != model.control_box.len() {
        return Err(Error::config(
            "hamiltonian_full_table: grid dimension mismatch".to_string(),
        ));
    }

    let mut values = vec![0.0f64; gamma_grid.len()];
    match model.kind() {
        ModelKind::DemandResponse(p) => {
            let d = p.dim();
            let mut constant = p.kappa * x;
            for k in 0..d {
                let mu = p.mus[k];
                constant += grid.axes()[k]
                    .iter()
                    .map(|&a| -z * a - a * a / (2.0 * mu))
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            values.iter_mut().for_each(|v| *v = constant);
            for k in 0..d {
                let s2 = p.sigmas[k] * p.sigmas[k];
                let pairs: Vec<(f64, f64)> = grid.axes()[d + k]
                    .iter()
                    .map(|&b| (s2 * b, -s2 / (2.0 * p.lambdas[k] * b)))
                    .collect();
                Hull::build(pairs).accumulate(gamma_grid, &mut values);
            }
        }
        _ => {
            let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(grid.len());
            grid.for_each_point(|_, u| {
                let c = model.coeffs(t, x, u);
                pairs.push((c.variance, c.drift * z - c.cost - c.k_a * y));
            });
            Hull::build(pairs).accumulate(gamma_grid, &mut values);
        }
    }
    Ok(GammaTable { gammas: gamma_grid.to_vec(), values })
}

// ---------------------------------------------------------------------------
// Conjugation operations
// ---------------------------------------------------------------------------

/// Reconstructs H_A(gamma) from constrained evaluations:
/// `max_S { H°_A(S) + gamma S / 2 }` over the achievable part of `s_grid`.
pub fn conjugate_from_constrained(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    gamma: f64,
    s_grid: &[f64],
    grid: &ControlGrid,
    tol_s: f64,
) -> Result<f64> {
    if s_grid.is_empty() {
        return Err(Error::EmptyGrid("s grid"));
    }
    let mut best = f64::NEG_INFINITY;
    let mut any = false;
    for &s in s_grid {
        let ev = hamiltonian_constrained(model, t, x, y, z, s, grid, tol_s)?;
        if !ev.feasible {
            continue;
        }
        any = true;
        best = best.max(ev.value + 0.5 * gamma * s);
    }
    if !any {
        return Err(Error::Infeasible(
            "no achievable variance level in s_grid".to_string(),
        ));
    }
    Ok(best)
}

/// The biconjugate of H°_A at one variance level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Biconjugate {
    /// `min_gamma { H_A(gamma) - gamma S / 2 }` over the gamma grid.
    pub value: f64,
    /// Smallest grid gamma attaining the minimum within 1e-12.
    pub gamma_star: f64,
    /// True when the minimum is attained only at an edge of the gamma
    /// grid, signalling that the clamped grid should be widened.
    pub at_boundary: bool,
}

pub(crate) fn biconjugate_from_table(table: &GammaTable, s: f64) -> Biconjugate {
    let n = table.gammas.len();
    let objective = |i: usize| table.values[i] - 0.5 * table.gammas[i] * s;
    let value = (0..n).map(objective).fold(f64::INFINITY, f64::min);
    let attains = |i: usize| objective(i) <= value + SELECTOR_SLACK;
    let idx = (0..n).find(|&i| attains(i)).unwrap_or(0);
    // the clamp warning fires only when no interior point attains the
    // minimum: flat stretches that happen to reach an edge are fine
    let interior_attains = (1..n.saturating_sub(1)).any(attains);
    Biconjugate {
        value,
        gamma_star: table.gammas[idx],
        at_boundary: !interior_attains,
    }
}

/// Biconjugate of H°_A at `s`: the gamma-grid infimum of
/// `H_A(gamma) - gamma S / 2`, with the smallest minimizing gamma.
pub fn biconjugate(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    s: f64,
    gamma_grid: &[f64],
    grid: &ControlGrid,
) -> Result<Biconjugate> {
    let table = hamiltonian_full_table(model, t, x, y, z, gamma_grid, grid)?;
    Ok(biconjugate_from_table(&table, s))
}

/// The variance induced by the full maximizer: sigma sigma^T at u*(gamma).
pub fn sigma_from_gamma(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    gamma: f64,
    grid: &ControlGrid,
) -> Result<f64> {
    let ev = hamiltonian_full(model, t, x, y, z, gamma, grid)?;
    Ok(model.coeffs(t, x, &ev.argmax).variance)
}

/// The gamma induced by a variance level: the biconjugate minimizer.
pub fn gamma_from_sigma(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    s: f64,
    gamma_grid: &[f64],
    grid: &ControlGrid,
) -> Result<f64> {
    Ok(biconjugate(model, t, x, y, z, s, gamma_grid, grid)?.gamma_star)
}

// ---------------------------------------------------------------------------
// Duality report
// ---------------------------------------------------------------------------

/// Gap scan over a variance grid testing the duality identity.
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    /// Achievable variance levels (infeasible inputs are in `skipped_s`).
    pub s_grid: Vec<f64>,
    pub h_constrained: Vec<f64>,
    pub biconjugate: Vec<f64>,
    /// `biconjugate - h_constrained`, one entry per achievable S.
    pub gap: Vec<f64>,
    /// Minimizing gamma per achievable S.
    pub gamma_star: Vec<f64>,
    /// Variance levels with no feasible control on the grid.
    pub skipped_s: Vec<f64>,
    pub max_gap: f64,
    /// First S attaining `max_gap`.
    pub witness_s: f64,
    /// Whether the duality identity holds: `max_gap <= tol_gap`.
    pub holds: bool,
    pub tol_gap: f64,
    /// Grid-resolution error bound underlying the default `tol_gap`.
    pub epsilon_grid: f64,
    /// Number of S entries whose minimizing gamma hit the grid boundary;
    /// non-zero counts signal the gamma grid should widen.
    pub gamma_boundary_hits: usize,
}

/// Computes the gap `biconjugate(S) - H°_A(S)` across `s_grid` and tests
/// `max_gap <= tol_gap`. When `tol_gap` is `None`, the default derives
/// `5 * epsilon_grid` from local Lipschitz estimates at the maximizers.
#[allow(clippy::too_many_arguments)]
pub fn duality_report(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    s_grid: &[f64],
    gamma_grid: &[f64],
    grid: &ControlGrid,
    tol_s: f64,
    tol_gap: Option<f64>,
) -> Result<DualityReport> {
    if s_grid.is_empty() {
        return Err(Error::EmptyGrid("s grid"));
    }
    let table = hamiltonian_full_table(model, t, x, y, z, gamma_grid, grid)?;

    let mut kept = Vec::new();
    let mut h_con = Vec::new();
    let mut bi = Vec::new();
    let mut gaps = Vec::new();
    let mut gamma_star = Vec::new();
    let mut skipped = Vec::new();
    let mut eps = 0.0f64;
    let mut boundary_hits = 0usize;

    for &s in s_grid {
        let con = hamiltonian_constrained(model, t, x, y, z, s, grid, tol_s)?;
        if !con.feasible {
            skipped.push(s);
            continue;
        }
        let b = biconjugate_from_table(&table, s);
        let local = local_resolution_error(model, t, x, y, z, b.gamma_star, grid, &con.argmax)
            + 0.5 * b.gamma_star.abs() * tol_s;
        eps = eps.max(local);
        if b.at_boundary {
            boundary_hits += 1;
        }
        kept.push(s);
        h_con.push(con.value);
        bi.push(b.value);
        gaps.push(b.value - con.value);
        gamma_star.push(b.gamma_star);
    }

    if kept.is_empty() {
        return Err(Error::Infeasible(
            "no achievable variance level in s_grid".to_string(),
        ));
    }

    let (witness_idx, max_gap) = gaps
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |(bi_, bg), (i, &g)| {
            if g > bg {
                (i, g)
            } else {
                (bi_, bg)
            }
        });
    let tol_gap = tol_gap.unwrap_or(5.0 * eps);
    let witness_s = kept[witness_idx];

    Ok(DualityReport {
        s_grid: kept,
        h_constrained: h_con,
        biconjugate: bi,
        gap: gaps,
        gamma_star,
        skipped_s: skipped,
        max_gap,
        witness_s,
        holds: max_gap <= tol_gap,
        tol_gap,
        epsilon_grid: eps,
        gamma_boundary_hits: boundary_hits,
    })
}

/// Variance grid spanning the correspondence image of the gamma grid,
/// clipped to the achievable range: endpoints are sigma_from_gamma at the
/// extreme gamma values.
pub fn default_s_grid(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    gamma_grid: &[f64],
    grid: &ControlGrid,
    n: usize,
) -> Result<Vec<f64>> {
    check_gamma_grid(gamma_grid)?;
    let s_lo = sigma_from_gamma(model, t, x, y, z, gamma_grid[0], grid)?;
    let s_hi = sigma_from_gamma(model, t, x, y, z, *gamma_grid.last().unwrap(), grid)?;
    let (mut lo, mut hi) = if s_lo <= s_hi { (s_lo, s_hi) } else { (s_hi, s_lo) };
    let (vmin, vmax) = model.variance_bounds(t, x, grid);
    lo = lo.max(vmin);
    hi = hi.min(vmax);
    Ok(linspace(lo, hi, n))
}
