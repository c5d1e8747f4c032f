//! Problem specification: coefficients, cost, discounts, utilities, and the
//! control set, with pointwise evaluation.
//!
//! A [`ModelSpec`] describes the controlled output
//!
//! ```text
//!     dX_t = sigma(t, X_t, u) lambda(t, X_t, u) dt + sigma(t, X_t, u) dW_t
//! ```
//!
//! with scalar output (d = 1), an n-dimensional Brownian motion, a control
//! box U, agent running cost c_A and discount rate k_A, principal discount
//! k_P, liquidation map l, reservation utility R_A, and the two parties'
//! utility functions. Three built-in models cover the worked examples:
//!
//! * `scalar-vol` — dX = u dW with u in (0,1] (clipped to [u_min, 1]),
//!   cost u^-2 / 2, CARA utilities, principal running cost h*S;
//! * `demand-response` — dX = -(a_1+..+a_k) dt + sum_k sigma_k sqrt(b_k) dW^k,
//!   cost sum a_k^2/(2 mu_k) + sum sigma_k^2/(lambda_k b_k)/2 - kappa*x,
//!   CARA utilities, principal running cost theta*x + h*S/2;
//! * `quartic` — dX = u dW with u in [-1,1], cost 1 - u^4, linear
//!   utilities, principal running cost S^3.
//!
//! Custom models supply coefficients from a closed-form catalogue of
//! power sums `sum_i c_i * u^{p_i} * x^{q_i}` (scalar control only).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ControlGrid, Interval};

/// Componentwise slack accepted when checking a control against the box.
pub const BOX_SLACK: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Utilities
// ---------------------------------------------------------------------------

/// A party's utility function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Utility {
    /// Identity utility (risk neutral).
    Linear,
    /// CARA utility `-exp(-risk_aversion * v)`.
    Exponential { risk_aversion: f64 },
}

impl Utility {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Utility::Linear => v,
            Utility::Exponential { risk_aversion } => -(-risk_aversion * v).exp(),
        }
    }

    /// Inverse utility; for CARA defined on negative arguments only.
    pub fn inverse(&self, w: f64) -> f64 {
        match self {
            Utility::Linear => w,
            Utility::Exponential { risk_aversion } => -(-w).ln() / risk_aversion,
        }
    }

    pub fn risk_aversion(&self) -> Option<f64> {
        match self {
            Utility::Linear => None,
            Utility::Exponential { risk_aversion } => Some(*risk_aversion),
        }
    }
}

// ---------------------------------------------------------------------------
// Closed-form coefficient catalogue (custom models)
// ---------------------------------------------------------------------------

/// One catalogue term `coef * u^u_pow * x^x_pow`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    #[serde(default)]
    pub u_pow: f64,
    #[serde(default)]
    pub x_pow: f64,
}

fn powi_or_f(base: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if p == p.trunc() && p.abs() <= 16.0 {
        base.powi(p as i32)
    } else {
        base.powf(p)
    }
}

/// Sum of catalogue terms in (u, x); an empty sum is identically zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerSum(pub Vec<Term>);

impl PowerSum {
    pub fn eval(&self, u: f64, x: f64) -> f64 {
        self.0
            .iter()
            .map(|t| t.coef * powi_or_f(u, t.u_pow) * powi_or_f(x, t.x_pow))
            .sum()
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty() || self.0.iter().all(|t| t.coef == 0.0)
    }

    /// True when no term involves x.
    fn x_free(&self) -> bool {
        self.0.iter().all(|t| t.x_pow == 0.0 || t.coef == 0.0)
    }
}

// ---------------------------------------------------------------------------
// Model kinds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct ScalarVolParams {
    /// Variance holding cost h in c_P(S) = hS; risk aversions and the
    /// control box live on the enclosing [`ModelSpec`].
    pub h: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct DemandResponseParams {
    pub sigmas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    pub kappa: f64,
    pub theta: f64,
    pub h: f64,
}

impl DemandResponseParams {
    pub fn dim(&self) -> usize {
        self.sigmas.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CustomModel {
    /// lambda components, one power sum per noise dimension.
    pub drift: Vec<PowerSum>,
    /// sigma row, one power sum per noise dimension.
    pub vol: Vec<PowerSum>,
    pub cost: PowerSum,
    pub agent_discount: PowerSum,
    /// k_P as a function of x (u-terms rejected at build time).
    pub principal_discount: PowerSum,
    /// l as a function of x.
    pub liquidation: PowerSum,
    /// c_P as a power sum in (S, x); the `u_pow` exponent acts on S.
    pub principal_running_cost: Option<PowerSum>,
}

#[derive(Debug, Clone)]
pub(crate) enum ModelKind {
    ScalarVol(ScalarVolParams),
    DemandResponse(DemandResponseParams),
    Quartic,
    Custom(Box<CustomModel>),
}

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

/// Pointwise coefficient values at one (t, x, u).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientEval {
    /// The product sigma*lambda (scalar, d = 1): the drift of X.
    pub drift_vec: f64,
    /// The sigma row (length = noise_dim).
    pub diffusion_row: Vec<f64>,
    /// sigma sigma^T (scalar, d = 1); equals |diffusion_row|^2.
    pub variance: f64,
    /// Agent running cost c_A.
    pub cost: f64,
    /// Agent discount rate k_A.
    pub k_a: f64,
}

/// Compact coefficient tuple for hot loops (no row allocation).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Coeffs {
    pub drift: f64,
    pub variance: f64,
    pub cost: f64,
    pub k_a: f64,
}

/// Full problem data for one principal-agent model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    /// Contract maturity T.
    pub horizon: f64,
    pub x0: f64,
    /// Output dimension d; fixed to 1.
    pub output_dim: usize,
    pub noise_dim: usize,
    pub control_box: Vec<Interval>,
    /// Agent reservation utility R_A.
    pub reservation: f64,
    pub agent_utility: Utility,
    pub principal_utility: Utility,
    pub(crate) kind: ModelKind,
}

impl ModelSpec {
    pub(crate) fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Validates that `u` lies in the control box within [`BOX_SLACK`].
    pub fn check_control(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.control_box.len() {
            return Err(Error::config(format!(
                "control has {} components, box has {}",
                u.len(),
                self.control_box.len()
            )));
        }
        for (axis, (&v, iv)) in u.iter().zip(&self.control_box).enumerate() {
            if !iv.contains(v, BOX_SLACK) {
                return Err(Error::ControlOutsideBox { axis, value: v, lo: iv.lo, hi: iv.hi });
            }
        }
        Ok(())
    }

    /// Evaluates all coefficients at one point. Pure: identical arguments
    /// give bit-identical results.
    pub fn eval_coefficients(&self, t: f64, x: f64, u: &[f64]) -> Result<CoefficientEval> {
        if t < -BOX_SLACK || t > self.horizon + BOX_SLACK {
            return Err(Error::config(format!(
                "t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        self.check_control(u)?;
        let c = self.coeffs(t, x, u);
        Ok(CoefficientEval {
            drift_vec: c.drift,
            diffusion_row: self.diffusion_row(t, x, u),
            variance: c.variance,
            cost: c.cost,
            k_a: c.k_a,
        })
    }

    /// Coefficient tuple without box checks or row allocation (hot path).
    pub(crate) fn coeffs(&self, t: f64, x: f64, u: &[f64]) -> Coeffs {
        let _ = t; // all catalogue coefficients are time-invariant
        match &self.kind {
            ModelKind::ScalarVol(_) => {
                let v = u[0];
                Coeffs { drift: 0.0, variance: v * v, cost: 0.5 / (v * v), k_a: 0.0 }
            }
            ModelKind::Quartic => {
                let v = u[0];
                let v2 = v * v;
                Coeffs { drift: 0.0, variance: v2, cost: 1.0 - v2 * v2, k_a: 0.0 }
            }
            ModelKind::DemandResponse(p) => {
                let d = p.dim();
                let (a, b) = u.split_at(d);
                let drift = -a.iter().sum::<f64>();
                let mut variance = 0.0;
                let mut cost = 0.0;
                for k in 0..d {
                    variance += p.sigmas[k] * p.sigmas[k] * b[k];
                    cost += a[k] * a[k] / (2.0 * p.mus[k])
                        + p.sigmas[k] * p.sigmas[k] / (2.0 * p.lambdas[k] * b[k]);
                }
                cost -= p.kappa * x;
                Coeffs { drift, variance, cost, k_a: 0.0 }
            }
            ModelKind::Custom(m) => {
                let v = u[0];
                let mut drift = 0.0;
                let mut variance = 0.0;
                for (lam, sig) in m.drift.iter().zip(&m.vol) {
                    let s = sig.eval(v, x);
                    drift += s * lam.eval(v, x);
                    variance += s * s;
                }
                Coeffs {
                    drift,
                    variance,
                    cost: m.cost.eval(v, x),
                    k_a: m.agent_discount.eval(v, x),
                }
            }
        }
    }

    /// The sigma row at one point.
    pub fn diffusion_row(&self, t: f64, x: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.noise_dim];
        self.diffusion_row_into(t, x, u, &mut out);
        out
    }

    /// Writes the sigma row into a caller-provided buffer (hot path).
    pub(crate) fn diffusion_row_into(&self, _t: f64, x: f64, u: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::ScalarVol(_) | ModelKind::Quartic => out[0] = u[0],
            ModelKind::DemandResponse(p) => {
                let d = p.dim();
                for k in 0..d {
                    out[k] = p.sigmas[k] * u[d + k].max(0.0).sqrt();
                }
            }
            ModelKind::Custom(m) => {
                for (slot, s) in out.iter_mut().zip(&m.vol) {
                    *slot = s.eval(u[0], x);
                }
            }
        }
    }

    /// Principal running cost c_P(t, x, S); zero when the model has none.
    pub fn principal_running_cost(&self, _t: f64, x: f64, s: f64) -> f64 {
        match &self.kind {
            ModelKind::ScalarVol(p) => p.h * s,
            ModelKind::DemandResponse(p) => p.theta * x + 0.5 * p.h * s,
            ModelKind::Quartic => s * s * s,
            ModelKind::Custom(m) => m
                .principal_running_cost
                .as_ref()
                .map_or(0.0, |c| c.eval(s, x)),
        }
    }

    /// Liquidation map l applied to the terminal output.
    pub fn liquidation(&self, x: f64) -> f64 {
        match &self.kind {
            ModelKind::ScalarVol(_) | ModelKind::Quartic => x,
            ModelKind::DemandResponse(_) => 0.0,
            ModelKind::Custom(m) => m.liquidation.eval(0.0, x),
        }
    }

    /// Principal discount rate k_P(t, x).
    pub fn principal_discount(&self, _t: f64, x: f64) -> f64 {
        match &self.kind {
            ModelKind::Custom(m) => m.principal_discount.eval(0.0, x),
            _ => 0.0,
        }
    }

    /// True when drift, vol, cost, discounts and c_P do not depend on x
    /// (enables exact aggregated simulation of constant policies).
    pub(crate) fn x_free(&self) -> bool {
        match &self.kind {
            ModelKind::ScalarVol(_) | ModelKind::Quartic => true,
            ModelKind::DemandResponse(_) => false, // kappa*x in cost, theta*x in c_P
            ModelKind::Custom(m) => {
                m.drift.iter().all(PowerSum::x_free)
                    && m.vol.iter().all(PowerSum::x_free)
                    && m.cost.x_free()
                    && m.agent_discount.x_free()
                    && m.principal_discount.x_free()
                    && m.principal_running_cost.as_ref().is_none_or(PowerSum::x_free)
            }
        }
    }

    /// True when the Hamiltonian argmax cannot depend on the state (x, y) for
    /// fixed (z, gamma) or (z, S): lets simulators reuse grid maximizations.
    /// Demand response qualifies because its only x term (kappa*x) is additive
    /// in the reward and its agent discount vanishes.
    pub(crate) fn argmax_state_free(&self) -> bool {
        match &self.kind {
            ModelKind::ScalarVol(_) | ModelKind::Quartic | ModelKind::DemandResponse(_) => true,
            ModelKind::Custom(m) => {
                m.drift.iter().all(PowerSum::x_free)
                    && m.vol.iter().all(PowerSum::x_free)
                    && m.cost.x_free()
                    && m.agent_discount.is_zero()
            }
        }
    }

    /// Per-axis grid densities used when the caller does not supply counts.
    pub fn default_control_counts(&self) -> Vec<usize> {
        match &self.kind {
            ModelKind::ScalarVol(_) => vec![100_001],
            ModelKind::Quartic => vec![200_001],
            ModelKind::DemandResponse(p) => {
                let d = p.dim();
                let mut counts = vec![201; d];
                counts.extend(std::iter::repeat_n(20_001, d));
                counts
            }
            ModelKind::Custom(_) => vec![2001],
        }
    }

    /// Default control grid at the model's default densities.
    pub fn default_grid(&self) -> Result<ControlGrid> {
        ControlGrid::uniform(&self.control_box, &self.default_control_counts())
    }

    /// Reservation utility in contract-state units: R_A itself for a linear
    /// agent utility, the certainty equivalent `U_A⁻¹(R_A)` for an
    /// exponential one (which requires R_A < 0).
    pub fn reservation_level(&self) -> Result<f64> {
        match &self.agent_utility {
            Utility::Linear => Ok(self.reservation),
            u @ Utility::Exponential { .. } => {
                if self.reservation.is_nan() || self.reservation >= 0.0 {
                    return Err(Error::config(
                        "reservation must be negative under an exponential agent utility",
                    ));
                }
                Ok(u.inverse(self.reservation))
            }
        }
    }

    /// Default tolerance band for variance-constrained maximization:
    /// ten times the grid-induced variance spacing.
    pub fn default_tol_s(&self, grid: &ControlGrid) -> f64 {
        let spacing = match &self.kind {
            ModelKind::DemandResponse(p) => {
                let d = p.dim();
                grid.axes()[d..]
                    .iter()
                    .enumerate()
                    .map(|(k, axis)| {
                        let step = axis
                            .windows(2)
                            .map(|w| w[1] - w[0])
                            .fold(0.0, f64::max);
                        p.sigmas[k] * p.sigmas[k] * step
                    })
                    .fold(0.0, f64::max)
            }
            _ => {
                // scalar control: largest spacing of sorted u -> variance values
                let axis = &grid.axes()[0];
                let mut vars: Vec<f64> = axis
                    .iter()
                    .map(|&u| self.coeffs(0.0, self.x0, &[u]).variance)
                    .collect();
                vars.sort_by(|a, b| a.partial_cmp(b).unwrap());
                vars.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
            }
        };
        (10.0 * spacing).max(1e-12)
    }

    /// Smallest and largest achievable variance on the grid.
    pub fn variance_bounds(&self, t: f64, x: f64, grid: &ControlGrid) -> (f64, f64) {
        match &self.kind {
            ModelKind::DemandResponse(p) => {
                let d = p.dim();
                let mut lo = 0.0;
                let mut hi = 0.0;
                for k in 0..d {
                    let axis = &grid.axes()[d + k];
                    let s2 = p.sigmas[k] * p.sigmas[k];
                    lo += s2 * axis.first().copied().unwrap_or(0.0);
                    hi += s2 * axis.last().copied().unwrap_or(0.0);
                }
                (lo, hi)
            }
            _ => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &u in &grid.axes()[0] {
                    let v = self.coeffs(t, x, &[u]).variance;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Achievable variance set
// ---------------------------------------------------------------------------

/// One achievable variance level together with a control attaining it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceWitness {
    pub variance: f64,
    pub control: Vec<f64>,
}

/// Enumerates `{sigma sigma^T(t, x, u) : u in grid}` deduplicated within
/// `tol_s`, sorted ascending, each level with its lexicographically first
/// witness control.
pub fn achievable_variance_set(
    model: &ModelSpec,
    t: f64,
    x: f64,
    grid: &ControlGrid,
    tol_s: f64,
) -> Result<Vec<VarianceWitness>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid("achievable_variance_set"));
    }
    let tol = tol_s.max(0.0);

    // For the separable demand-response model the product lattice can be
    // astronomically large; reach variance buckets by one pass per b-axis.
    if let ModelKind::DemandResponse(p) = model.kind() {
        return Ok(demand_response_variances(model, p, grid, tol));
    }

    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(grid.len());
    grid.for_each_point(|flat, u| {
        pairs.push((model.coeffs(t, x, u).variance, flat));
    });
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut out: Vec<VarianceWitness> = Vec::new();
    let mut cluster_start = f64::NEG_INFINITY;
    let mut cluster_witness = usize::MAX;
    for &(v, flat) in &pairs {
        if out.is_empty() || v - cluster_start > tol {
            if !out.is_empty() {
                out.last_mut().unwrap().control = grid.point(cluster_witness);
            }
            cluster_start = v;
            cluster_witness = flat;
            out.push(VarianceWitness { variance: v, control: Vec::new() });
        } else if flat < cluster_witness {
            cluster_witness = flat;
        }
    }
    if let Some(last) = out.last_mut() {
        last.control = grid.point(cluster_witness);
    }
    Ok(out)
}

/// Bucketed reachability scan over the b-axes of the demand-response model.
fn demand_response_variances(
    model: &ModelSpec,
    p: &DemandResponseParams,
    grid: &ControlGrid,
    tol: f64,
) -> Vec<VarianceWitness> {
    let d = p.dim();
    let (_, hi) = model.variance_bounds(0.0, model.x0, grid);
    let width = tol.max(hi * 1e-9).max(1e-12);
    // bucket index -> (variance, lexicographically smallest b-tuple)
    let mut reach: Vec<(f64, Vec<f64>)> = vec![(0.0, Vec::new())];
    for k in 0..d {
        let s2 = p.sigmas[k] * p.sigmas[k];
        let mut next: std::collections::BTreeMap<i64, (f64, Vec<f64>)> =
            std::collections::BTreeMap::new();
        for (var, tuple) in &reach {
            for &b in &grid.axes()[d + k] {
                let v = var + s2 * b;
                let key = (v / width).round() as i64;
                let mut t2 = tuple.clone();
                t2.push(b);
                let replace = match next.get(&key) {
                    None => true,
                    Some((_, existing)) => t2.as_slice() < existing.as_slice(),
                };
                if replace {
                    next.insert(key, (v, t2));
                }
            }
        }
        reach = next.into_values().collect();
    }
    reach.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // collapse buckets that still sit within tol of each other
    let a_prefix: Vec<f64> = grid.axes()[..d].iter().map(|ax| ax[0]).collect();
    let mut out: Vec<VarianceWitness> = Vec::new();
    for (v, tuple) in reach {
        let close = out
            .last()
            .is_some_and(|w: &VarianceWitness| v - w.variance <= tol);
        if !close {
            let mut control = a_prefix.clone();
            control.extend_from_slice(&tuple);
            out.push(VarianceWitness { variance: v, control });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Configuration parsing
// ---------------------------------------------------------------------------

fn default_t() -> f64 {
    1.0
}
fn default_one() -> f64 {
    1.0
}
fn default_half() -> f64 {
    0.5
}
fn default_neg_one() -> f64 {
    -1.0
}
fn default_u_min() -> f64 {
    1e-3
}
fn default_two() -> f64 {
    2.0
}
fn default_pair() -> Vec<f64> {
    vec![1.0, 1.0]
}
fn default_lambdas() -> Vec<f64> {
    vec![1.0, 4.0]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalarVolConfig {
    #[serde(rename = "example")]
    _example: String,
    #[serde(default = "default_one")]
    gamma_a: f64,
    #[serde(default = "default_one")]
    gamma_p: f64,
    #[serde(default = "default_one")]
    h: f64,
    #[serde(rename = "T", default = "default_t")]
    horizon: f64,
    #[serde(default)]
    x0: f64,
    #[serde(rename = "R_A", default = "default_neg_one")]
    reservation: f64,
    #[serde(default = "default_u_min")]
    u_min: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandResponseConfig {
    #[serde(rename = "example")]
    _example: String,
    #[serde(default = "default_pair")]
    sigmas: Vec<f64>,
    #[serde(default = "default_lambdas")]
    lambdas: Vec<f64>,
    #[serde(default = "default_pair")]
    mus: Vec<f64>,
    #[serde(default = "default_half")]
    kappa: f64,
    #[serde(default = "default_one")]
    theta: f64,
    #[serde(default = "default_one")]
    h: f64,
    #[serde(default = "default_one")]
    gamma_a: f64,
    #[serde(default = "default_one")]
    gamma_p: f64,
    #[serde(rename = "T", default = "default_t")]
    horizon: f64,
    #[serde(default)]
    x0: f64,
    #[serde(rename = "R_A", default = "default_neg_one")]
    reservation: f64,
    #[serde(default = "default_two")]
    a_max: f64,
    #[serde(default = "default_two")]
    b_max: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuarticConfig {
    #[serde(rename = "example")]
    _example: String,
    #[serde(rename = "T", default = "default_t")]
    horizon: f64,
    #[serde(default)]
    x0: f64,
    #[serde(rename = "R_A", default)]
    reservation: f64,
}

fn default_liquidation() -> PowerSum {
    PowerSum(vec![Term { coef: 1.0, u_pow: 0.0, x_pow: 1.0 }])
}

fn default_linear() -> Utility {
    Utility::Linear
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomConfig {
    horizon: f64,
    #[serde(default)]
    x0: f64,
    control_box: Vec<[f64; 2]>,
    drift: Vec<PowerSum>,
    vol: Vec<PowerSum>,
    cost: PowerSum,
    #[serde(default)]
    agent_discount: PowerSum,
    #[serde(default)]
    principal_discount: PowerSum,
    #[serde(default = "default_liquidation")]
    liquidation: PowerSum,
    #[serde(default)]
    reservation: f64,
    #[serde(default = "default_linear")]
    agent_utility: Utility,
    #[serde(default = "default_linear")]
    principal_utility: Utility,
    #[serde(default)]
    principal_running_cost: Option<PowerSum>,
    #[serde(default)]
    name: Option<String>,
}

#[derive(Deserialize)]
struct TopLevel {
    example: Option<String>,
    custom: Option<serde_json::Value>,
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn require_all_positive(name: &str, vs: &[f64]) -> Result<()> {
    for &v in vs {
        require_positive(name, v)?;
    }
    Ok(())
}

/// Builds a validated [`ModelSpec`] from a configuration document.
///
/// The document carries either a built-in name under `"example"`
/// (`"scalar-vol"`, `"demand-response"`, `"quartic"`) with overridable
/// parameters alongside, or a full coefficient description under
/// `"custom"`. See `configs/` for worked files.
pub fn build_model(config: &serde_json::Value) -> Result<ModelSpec> {
    let top: TopLevel = serde_json::from_value(config.clone())?;
    let spec = match (top.example.as_deref(), top.custom) {
        (Some("scalar-vol"), None) => {
            let c: ScalarVolConfig = serde_json::from_value(config.clone())?;
            require_positive("gamma_a", c.gamma_a)?;
            require_positive("gamma_p", c.gamma_p)?;
            require_positive("h", c.h)?;
            if !(c.u_min > 0.0 && c.u_min < 1.0) {
                return Err(Error::config(format!(
                    "u_min must lie in (0, 1), got {}",
                    c.u_min
                )));
            }
            if c.reservation.is_nan() || c.reservation >= 0.0 {
                return Err(Error::config(
                    "R_A must be negative under CARA agent utility".to_string(),
                ));
            }
            ModelSpec {
                name: "scalar-vol".to_string(),
                horizon: c.horizon,
                x0: c.x0,
                output_dim: 1,
                noise_dim: 1,
                control_box: vec![Interval::new(c.u_min, 1.0)?],
                reservation: c.reservation,
                agent_utility: Utility::Exponential { risk_aversion: c.gamma_a },
                principal_utility: Utility::Exponential { risk_aversion: c.gamma_p },
                kind: ModelKind::ScalarVol(ScalarVolParams { h: c.h }),
            }
        }
        (Some("demand-response"), None) => {
            let c: DemandResponseConfig = serde_json::from_value(config.clone())?;
            let d = c.sigmas.len();
            if d == 0 || d > 2 || c.lambdas.len() != d || c.mus.len() != d {
                return Err(Error::config(
                    "demand-response needs matching sigmas/lambdas/mus of length 1 or 2"
                        .to_string(),
                ));
            }
            require_all_positive("sigmas", &c.sigmas)?;
            require_all_positive("lambdas", &c.lambdas)?;
            require_all_positive("mus", &c.mus)?;
            require_positive("gamma_a", c.gamma_a)?;
            require_positive("gamma_p", c.gamma_p)?;
            require_positive("theta", c.theta)?;
            require_positive("h", c.h)?;
            require_positive("a_max", c.a_max)?;
            require_positive("b_max", c.b_max)?;
            if c.kappa.is_nan() || c.kappa < 0.0 {
                return Err(Error::config("kappa must be non-negative".to_string()));
            }
            if c.reservation.is_nan() || c.reservation >= 0.0 {
                return Err(Error::config(
                    "R_A must be negative under CARA agent utility".to_string(),
                ));
            }
            let mut control_box = Vec::with_capacity(2 * d);
            for _ in 0..d {
                control_box.push(Interval::new(0.0, c.a_max)?);
            }
            for _ in 0..d {
                control_box.push(Interval::new(0.0, c.b_max)?);
            }
            ModelSpec {
                name: "demand-response".to_string(),
                horizon: c.horizon,
                x0: c.x0,
                output_dim: 1,
                noise_dim: d,
                control_box,
                reservation: c.reservation,
                agent_utility: Utility::Exponential { risk_aversion: c.gamma_a },
                principal_utility: Utility::Exponential { risk_aversion: c.gamma_p },
                kind: ModelKind::DemandResponse(DemandResponseParams {
                    sigmas: c.sigmas,
                    lambdas: c.lambdas,
                    mus: c.mus,
                    kappa: c.kappa,
                    theta: c.theta,
                    h: c.h,
                }),
            }
        }
        (Some("quartic"), None) => {
            let c: QuarticConfig = serde_json::from_value(config.clone())?;
            ModelSpec {
                name: "quartic".to_string(),
                horizon: c.horizon,
                x0: c.x0,
                output_dim: 1,
                noise_dim: 1,
                control_box: vec![Interval::new(-1.0, 1.0)?],
                reservation: c.reservation,
                agent_utility: Utility::Linear,
                principal_utility: Utility::Linear,
                kind: ModelKind::Quartic,
            }
        }
        (Some(other), None) => {
            return Err(Error::config(format!("unknown example name {other:?}")));
        }
        (None, Some(custom)) => build_custom(serde_json::from_value(custom)?)?,
        _ => {
            return Err(Error::config(
                "config must have exactly one of the keys \"example\" or \"custom\""
                    .to_string(),
            ));
        }
    };

    if !spec.horizon.is_finite() || spec.horizon <= 0.0 {
        return Err(Error::config(format!(
            "non-positive horizon T = {}",
            spec.horizon
        )));
    }
    if spec.control_box.is_empty() {
        return Err(Error::config("empty control box".to_string()));
    }
    spot_check(&spec)?;
    Ok(spec)
}

fn build_custom(c: CustomConfig) -> Result<ModelSpec> {
    if c.control_box.len() != 1 {
        return Err(Error::config(
            "custom models support a scalar control only; use the built-in \
             \"demand-response\" example for the multi-dimensional case"
                .to_string(),
        ));
    }
    let n = c.vol.len();
    if n == 0 || c.drift.len() != n {
        return Err(Error::config(
            "custom drift and vol need one power sum per noise dimension".to_string(),
        ));
    }
    if !c.principal_discount.x_free() && c.principal_discount.0.iter().any(|t| t.u_pow != 0.0) {
        return Err(Error::config(
            "principal_discount may depend on x only".to_string(),
        ));
    }
    if let Some(ra) = c.agent_utility.risk_aversion() {
        require_positive("agent risk aversion", ra)?;
        if !c.agent_discount.is_zero() {
            return Err(Error::config(
                "exponential agent utility requires zero agent_discount".to_string(),
            ));
        }
    }
    if let Some(rp) = c.principal_utility.risk_aversion() {
        require_positive("principal risk aversion", rp)?;
        if !c.principal_discount.is_zero() {
            return Err(Error::config(
                "exponential principal utility requires zero principal_discount".to_string(),
            ));
        }
    }
    let control_box = c
        .control_box
        .iter()
        .map(|&[lo, hi]| Interval::new(lo, hi))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelSpec {
        name: c.name.unwrap_or_else(|| "custom".to_string()),
        horizon: c.horizon,
        x0: c.x0,
        output_dim: 1,
        noise_dim: n,
        control_box,
        reservation: c.reservation,
        agent_utility: c.agent_utility,
        principal_utility: c.principal_utility,
        kind: ModelKind::Custom(Box::new(CustomModel {
            drift: c.drift,
            vol: c.vol,
            cost: c.cost,
            agent_discount: c.agent_discount,
            principal_discount: c.principal_discount,
            liquidation: c.liquidation,
            principal_running_cost: c.principal_running_cost,
        })),
    })
}

/// Boundedness and sign spot checks on a coarse probe lattice.
///
/// Global boundedness of the coefficients is not decidable for catalogue
/// expressions; the check probes box corners and midpoints at a few
/// (t, x) values and rejects NaN coefficients and negative costs at the
/// initial state. The demand-response cost is +inf on the b_k = 0 face
/// (excluded from suprema automatically); infinities are therefore only
/// rejected when they occur at interior probe points.
fn spot_check(spec: &ModelSpec) -> Result<()> {
    let probe_counts = vec![3usize; spec.control_box.len()];
    let grid = ControlGrid::uniform(&spec.control_box, &probe_counts)?;
    let xs = [spec.x0 - 1.0, spec.x0, spec.x0 + 1.0];
    let ts = [0.0, 0.5 * spec.horizon, spec.horizon];
    let mut err = None;
    grid.for_each_point(|_, u| {
        if err.is_some() {
            return;
        }
        let interior = u
            .iter()
            .zip(&spec.control_box)
            .all(|(&v, iv)| v > iv.lo || iv.span() == 0.0);
        for &t in &ts {
            for &x in &xs {
                let c = spec.coeffs(t, x, u);
                if c.drift.is_nan() || c.variance.is_nan() || c.cost.is_nan() || c.k_a.is_nan() {
                    err = Some(Error::config(format!(
                        "coefficients evaluate to NaN at u = {u:?}, x = {x}"
                    )));
                    return;
                }
                if interior && !(c.drift.is_finite() && c.variance.is_finite()) {
                    err = Some(Error::config(format!(
                        "unbounded drift/vol at interior point u = {u:?}, x = {x}"
                    )));
                    return;
                }
                if x == spec.x0 && c.cost < -1e-9 {
                    err = Some(Error::config(format!(
                        "negative agent cost {} at u = {u:?}, x = x0",
                        c.cost
                    )));
                    return;
                }
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Convenience wrapper: parse a JSON string and build the model.
pub fn model_from_json(json: &str) -> Result<ModelSpec> {
    build_model(&serde_json::from_str(json)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic() -> ModelSpec {
        model_from_json(r#"{"example": "quartic", "T": 1, "x0": 0}"#).unwrap()
    }

    fn scalar_vol() -> ModelSpec {
        model_from_json(r#"{"example": "scalar-vol"}"#).unwrap()
    }

    fn demand_response() -> ModelSpec {
        model_from_json(r#"{"example": "demand-response"}"#).unwrap()
    }

    #[test]
    fn quartic_builds_with_expected_box_and_cost() {
        let m = quartic();
        assert_eq!(m.control_box, vec![Interval { lo: -1.0, hi: 1.0 }]);
        let c = m.eval_coefficients(0.0, 0.0, &[0.5]).unwrap();
        assert_eq!(c.variance, 0.25);
        assert_eq!(c.cost, 0.9375);
        assert_eq!(m.principal_running_cost(0.0, 0.0, 0.5), 0.125);
    }

    #[test]
    fn scalar_vol_boundary_control() {
        let m = scalar_vol();
        let c = m.eval_coefficients(0.5, 0.0, &[1.0]).unwrap();
        assert_eq!(c.variance, 1.0);
        assert_eq!(c.cost, 0.5);
        assert_eq!(c.drift_vec, 0.0);
    }

    #[test]
    fn non_positive_horizon_rejected() {
        let err = model_from_json(r#"{"example": "scalar-vol", "T": 0}"#).unwrap_err();
        assert!(err.to_string().contains("non-positive horizon"));
    }

    #[test]
    fn unknown_example_rejected() {
        assert!(model_from_json(r#"{"example": "nope"}"#).is_err());
    }

    #[test]
    fn bad_risk_aversion_rejected() {
        assert!(model_from_json(r#"{"example": "scalar-vol", "gamma_a": 0}"#).is_err());
        assert!(model_from_json(r#"{"example": "scalar-vol", "gamma_a": -1}"#).is_err());
    }

    #[test]
    fn demand_response_coefficients() {
        let m = demand_response();
        let u = [0.3, 0.3, 1.0, 0.5];
        let c = m.eval_coefficients(0.0, 0.0, &u).unwrap();
        assert!((c.variance - 1.5).abs() < 1e-15);
        assert!((c.drift_vec - -0.6).abs() < 1e-15);
        assert!((c.cost - 0.84).abs() < 1e-15);
        let row = c.diffusion_row;
        assert!((row[0] - 1.0).abs() < 1e-15);
        assert!((row[1] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn control_outside_box_rejected() {
        let m = quartic();
        assert!(m.eval_coefficients(0.0, 0.0, &[1.1]).is_err());
        // within slack is accepted
        assert!(m.eval_coefficients(0.0, 0.0, &[1.0 + 1e-13]).is_ok());
    }

    #[test]
    fn eval_is_pure() {
        let m = demand_response();
        let u = [0.1, 0.2, 0.7, 1.3];
        let a = m.eval_coefficients(0.3, 0.4, &u).unwrap();
        let b = m.eval_coefficients(0.3, 0.4, &u).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quartic_cost_symmetry() {
        let m = quartic();
        for i in 0..=100 {
            let u = -1.0 + 0.02 * i as f64;
            let cp = m.coeffs(0.0, 0.0, &[u]).cost;
            let cm = m.coeffs(0.0, 0.0, &[-u]).cost;
            assert_eq!(cp, cm);
        }
    }

    #[test]
    fn achievable_variances_quartic() {
        let m = quartic();
        let grid = ControlGrid::uniform(&m.control_box, &[201]).unwrap();
        // tight tolerance: clusters collapse to near-identical variances
        let set = achievable_variance_set(&m, 0.0, 0.0, &grid, 1e-9).unwrap();
        assert_eq!(set.first().unwrap().variance, 0.0);
        assert_eq!(set.first().unwrap().control, vec![0.0]);
        assert_eq!(set.last().unwrap().variance, 1.0);
        // u = -1 and u = 1 share variance exactly; the lexicographically
        // first witness is u = -1
        assert_eq!(set.last().unwrap().control, vec![-1.0]);
        for w in &set {
            assert!((0.0..=1.0).contains(&w.variance));
        }
        // a coarse tolerance merges clusters; witnesses stay in-cluster
        let tol = m.default_tol_s(&grid);
        let coarse = achievable_variance_set(&m, 0.0, 0.0, &grid, tol).unwrap();
        assert!(coarse.len() < set.len());
        for w in &coarse {
            let v = m.coeffs(0.0, 0.0, &w.control).variance;
            assert!(v >= w.variance && v <= w.variance + tol);
        }
    }

    #[test]
    fn achievable_variances_singleton() {
        let m = scalar_vol();
        let grid = ControlGrid::from_axes(vec![vec![1.0]]).unwrap();
        let set = achievable_variance_set(&m, 0.0, 0.0, &grid, 1e-6).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set[0].variance, 1.0);
        assert_eq!(set[0].control, vec![1.0]);
    }

    #[test]
    fn achievable_variances_demand_response_range() {
        let m = demand_response();
        // a-axes singletons, b-axes 21 points on [0, 2]
        let grid = ControlGrid::uniform(
            &m.control_box,
            &[1, 1, 21, 21],
        )
        .unwrap();
        let set = achievable_variance_set(&m, 0.0, 0.0, &grid, 1e-6).unwrap();
        let lo = set.first().unwrap().variance;
        let hi = set.last().unwrap().variance;
        assert_eq!(lo, 0.0);
        assert!((hi - 4.0).abs() < 1e-12);
        // every point's variance is represented within tol
        let vs: Vec<f64> = set.iter().map(|w| w.variance).collect();
        for b1 in 0..21 {
            for b2 in 0..21 {
                let v = 0.1 * b1 as f64 + 0.1 * b2 as f64;
                assert!(vs.iter().any(|&w| (w - v).abs() <= 0.1 + 1e-9));
            }
        }
    }

    #[test]
    fn variance_set_members_match_eval(){
        let m = quartic();
        let grid = ControlGrid::uniform(&m.control_box, &[101]).unwrap();
        let tol = m.default_tol_s(&grid);
        let set = achievable_variance_set(&m, 0.0, 0.0, &grid, tol).unwrap();
        grid.for_each_point(|_, u| {
            let v = m.coeffs(0.0, 0.0, u).variance;
            assert!(
                set.iter().any(|w| (w.variance - v).abs() <= tol),
                "variance {v} not represented"
            );
        });
    }

    #[test]
    fn custom_model_catalogue() {
        let json = r#"{"custom": {
            "horizon": 2.0,
            "x0": 0.5,
            "control_box": [[0.0, 1.0]],
            "drift": [[{"coef": 0.3, "u_pow": 1}]],
            "vol": [[{"coef": 1.0, "u_pow": 1}]],
            "cost": [{"coef": 0.5, "u_pow": 2}],
            "reservation": 0.0
        }}"#;
        let m = model_from_json(json).unwrap();
        assert_eq!(m.noise_dim, 1);
        let c = m.eval_coefficients(0.0, 0.5, &[0.5]).unwrap();
        assert!((c.drift_vec - 0.5 * 0.3 * 0.5).abs() < 1e-15);
        assert!((c.variance - 0.25).abs() < 1e-15);
        assert!((c.cost - 0.125).abs() < 1e-15);
        assert_eq!(m.liquidation(2.0), 2.0); // default liquidation is identity
    }

    #[test]
    fn custom_multi_control_rejected() {
        let json = r#"{"custom": {
            "horizon": 1.0,
            "control_box": [[0,1],[0,1]],
            "drift": [[]],
            "vol": [[{"coef": 1.0, "u_pow": 1}]],
            "cost": []
        }}"#;
        assert!(model_from_json(json).is_err());
    }

    #[test]
    fn custom_cara_with_discount_rejected() {
        let json = r#"{"custom": {
            "horizon": 1.0,
            "control_box": [[0,1]],
            "drift": [[]],
            "vol": [[{"coef": 1.0, "u_pow": 1}]],
            "cost": [],
            "agent_discount": [{"coef": 0.1}],
            "agent_utility": {"exponential": {"risk_aversion": 1.0}}
        }}"#;
        assert!(model_from_json(json).is_err());
    }

    #[test]
    fn default_tol_s_scales_with_grid() {
        let m = quartic();
        let coarse = ControlGrid::uniform(&m.control_box, &[101]).unwrap();
        let fine = ControlGrid::uniform(&m.control_box, &[1001]).unwrap();
        assert!(m.default_tol_s(&fine) < m.default_tol_s(&coarse));
    }
}
