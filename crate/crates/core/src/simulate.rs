//! Monte Carlo simulation of contract dynamics under optimal agent response.
//!
//! The simulator advances the coupled output/contract pair (X, Y) with an
//! Euler–Maruyama scheme.  At every step the agent's control is the grid
//! maximizer of the relevant Hamiltonian: the full Hamiltonian for
//! quadratic-penalty ("CPT") contracts, the variance-constrained one for
//! first-best ("FB") contracts.  Deviation variants keep the contract fixed
//! while the output is driven by a caller-chosen constant control, which is
//! what a best-response audit needs.
//!
//! # On-policy dynamics
//!
//! When the agent plays the maximizer `ν` of the Hamiltonian the contract
//! increment collapses to a reduced form used directly here:
//!
//! ```text
//! dX = σλ(ν) dt + σ(ν) dW
//! dY = (c_A(ν) + k_A(ν)·Y) dt + Z σ(ν) dW          (linear utilities)
//! dY = (c_A(ν) + ½γ_A Z² σσᵀ(ν)) dt + Z σ(ν) dW    (exponential agent)
//! ```
//!
//! Under an exponential agent utility the contract state starts at the
//! certainty equivalent `U_A⁻¹(y0)` and carries the `½γ_A Z² d⟨X⟩`
//! compensator, so that `E[U_A(Y_T − ∫c_A dt)] = y0` holds exactly,
//! step-by-step, even at finite Δt.
//!
//! # Deviation dynamics
//!
//! A deviating agent plays a fixed control `u` while Y follows the contract
//! itself:
//!
//! ```text
//! dY = Z dX + ½Γ d⟨X⟩ − H_A(t, X, Y, Z, Γ) dt  [+ ½γ_A Z² d⟨X⟩]   (CPT)
//! dY = Z dX − H°_A(t, X, Y, Z, Σ) dt           [+ ½γ_A Z² d⟨X⟩]   (FB)
//! ```
//!
//! with `d⟨X⟩ = σσᵀ(u) dt` and the Hamiltonian value obtained by grid
//! maximization at the current state.  (When the agent-discount rate depends
//! on the control it is evaluated at the played control; every catalogue
//! model has a zero rate, so this convention is inert in practice.)
//!
//! # Randomness protocol
//!
//! Each path owns an independent, reproducible random stream:
//! `ChaCha8Rng::seed_from_u64(master_seed)` with stream index
//! `stream_offset · 2⁴⁰ + path_index`.  A step draws `noise_dim` standard
//! normal variates in coordinate order and scales them by `√Δt`.  Because no
//! state is shared between paths, ensembles are bit-identical for any worker
//! count, and separate simulations that must be coupled (or decoupled) can
//! control this through `master_seed` and `stream_offset`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::ControlGrid;
use crate::hamiltonian::{
    check_grid, hamiltonian_constrained, hamiltonian_full, reward_constrained_unchecked,
    reward_full_unchecked,
};
use crate::model::{ModelSpec, Utility};

/// Multiplier separating stream-offset blocks in the ChaCha stream index.
/// Up to 2^40 paths per simulation and 2^24 stream offsets never collide.
pub const STREAM_BLOCK: u64 = 1 << 40;

/// A scalar-valued policy of (t, x, y).
///
/// The `Constant` variant is recognized by the simulator and unlocks cheap
/// control resolution; arbitrary closures are supported through `Fn`.
#[derive(Clone)]
pub enum Policy {
    Constant(f64),
    Fn(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

impl Policy {
    /// Wraps a closure policy.
    pub fn from_fn(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Policy::Fn(Arc::new(f))
    }

    /// Evaluates the policy at a state.
    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        match self {
            Policy::Constant(v) => *v,
            Policy::Fn(f) => f(t, x, y),
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, Policy::Constant(_))
    }
}

impl From<f64> for Policy {
    fn from(v: f64) -> Self {
        Policy::Constant(v)
    }
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Constant(v) => write!(f, "Constant({v})"),
            Policy::Fn(_) => write!(f, "Fn(<closure>)"),
        }
    }
}

/// Quadratic-penalty contract: promised value `y0`, sensitivity Z and
/// quadratic-variation penalty Γ as policies of (t, x, y).
#[derive(Debug, Clone)]
pub struct ContractCpt {
    pub y0: f64,
    pub z_policy: Policy,
    pub gamma_policy: Policy,
}

impl ContractCpt {
    /// Contract with constant Z and Γ.
    pub fn constant(y0: f64, z: f64, gamma: f64) -> Self {
        ContractCpt { y0, z_policy: z.into(), gamma_policy: gamma.into() }
    }
}

/// First-best contract: promised value `y0`, sensitivity Z and prescribed
/// variance level Σ as policies of (t, x, y).
#[derive(Debug, Clone)]
pub struct ContractFb {
    pub y0: f64,
    pub z_policy: Policy,
    pub sigma_policy: Policy,
}

impl ContractFb {
    /// Contract with constant Z and Σ.
    pub fn constant(y0: f64, z: f64, sigma: f64) -> Self {
        ContractFb { y0, z_policy: z.into(), sigma_policy: sigma.into() }
    }
}

/// Monte Carlo configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Number of simulated paths (≥ 1).
    pub n_paths: usize,
    /// Number of Euler steps; Δt = horizon / n_steps.
    pub n_steps: usize,
    /// Seed of the ChaCha8 generator shared by all paths.
    pub master_seed: u64,
    /// Trailing-window length (in steps) for realized-variance estimates.
    pub qv_window: usize,
    /// How many leading paths keep a full per-step trace.
    pub record_paths: usize,
    /// Stream-offset block, decoupling simulations run from one master seed.
    pub stream_offset: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
}

impl SimConfig {
    /// Configuration with no recorded traces, offset 0 and automatic workers.
    pub fn new(n_paths: usize, n_steps: usize, master_seed: u64, qv_window: usize) -> Self {
        SimConfig {
            n_paths,
            n_steps,
            master_seed,
            qv_window,
            record_paths: 0,
            stream_offset: 0,
            workers: None,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_paths < 1 {
            return Err(Error::config("n_paths must be ≥ 1"));
        }
        if self.n_steps < 1 {
            return Err(Error::config("n_steps must be ≥ 1"));
        }
        if self.qv_window < 1 {
            return Err(Error::config("qv_window must be ≥ 1"));
        }
        if self.qv_window > self.n_steps {
            return Err(Error::config(format!(
                "qv_window {} exceeds the available history ({} steps)",
                self.qv_window, self.n_steps
            )));
        }
        Ok(())
    }
}

/// Mean, standard error and sample count of a Monte Carlo functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Sample mean and standard error (Bessel-corrected) of a slice.
pub fn mc_estimate(values: &[f64]) -> MCEstimate {
    let n = values.len();
    if n == 0 {
        return MCEstimate { mean: f64::NAN, std_error: f64::NAN, n: 0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MCEstimate { mean, std_error: 0.0, n };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    MCEstimate { mean, std_error: (var / n as f64).sqrt(), n }
}

/// Terminal bookkeeping of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    /// Terminal output X_T.
    pub x_t: f64,
    /// Terminal contract value Y_T = ξ (certainty-equivalent units under an
    /// exponential agent utility).
    pub y_t: f64,
    /// Accumulated quadratic variation ⟨X⟩_T.
    pub qv_t: f64,
    /// ∫₀ᵀ c_A dt.
    pub cost_integral: f64,
    /// ∫₀ᵀ K_A c_A dt.
    pub k_a_cost_integral: f64,
    /// ∫₀ᵀ c_P dt.
    pub cp_integral: f64,
    /// ∫₀ᵀ K_P c_P dt.
    pub k_p_cp_integral: f64,
    /// Terminal agent discount K_A(T).
    pub k_a_t: f64,
    /// Terminal principal discount K_P(T).
    pub k_p_t: f64,
    /// False when the prescribed variance was unattainable at some state.
    pub feasible: bool,
    /// Step index at which the path froze, if any.
    pub frozen_at: Option<usize>,
}

/// Per-step record of one path; rows align with `PathEnsemble::time`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Running quadratic variation ⟨X⟩.
    pub qv: Vec<f64>,
    /// Running agent cost ∫c_A dt.
    pub cost: Vec<f64>,
    /// Agent discount factor K_A.
    pub k_a: Vec<f64>,
}

/// A simulated ensemble: shared time grid, per-path summaries and the traces
/// of the first `record_paths` paths.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    /// t_i = i·Δt for i = 0..n_steps (last entry exactly the horizon).
    pub time: Vec<f64>,
    /// Step size Δt.
    pub dt: f64,
    /// Promised contract value (utility units).
    pub y0: f64,
    /// Initial contract state Y_0; equals `y0` for a linear agent utility and
    /// the certainty equivalent `U_A⁻¹(y0)` for an exponential one.
    pub y0_level: f64,
    pub summaries: Vec<PathSummary>,
    pub traces: Vec<PathTrace>,
}

impl PathEnsemble {
    /// Number of simulated paths.
    pub fn n_paths(&self) -> usize {
        self.summaries.len()
    }

    /// Number of paths that never froze.
    pub fn n_feasible(&self) -> usize {
        self.summaries.iter().filter(|s| s.feasible).count()
    }
}

/// Trailing-window realized variance estimates of one recorded path.
#[derive(Debug, Clone, PartialEq)]
pub struct QvSeries {
    /// Estimate times (window right endpoints).
    pub t: Vec<f64>,
    /// Windowed squared-increment sums divided by the window duration.
    pub estimate: Vec<f64>,
}

/// Simulates a quadratic-penalty contract under the optimal agent response.
pub fn simulate_cpt(
    model: &ModelSpec,
    contract: &ContractCpt,
    cfg: &SimConfig,
    grid: &ControlGrid,
) -> Result<PathEnsemble> {
    run_ensemble(model, Mode::Cpt { c: contract }, cfg, grid, 0.0)
}

/// Simulates a first-best contract under the optimal agent response.
///
/// States where the prescribed variance is unattainable within `tol_s` freeze
/// the path and mark it infeasible; ensemble statistics remain available over
/// the feasible paths.
pub fn simulate_fb(
    model: &ModelSpec,
    contract: &ContractFb,
    cfg: &SimConfig,
    grid: &ControlGrid,
    tol_s: f64,
) -> Result<PathEnsemble> {
    check_tol_s(tol_s)?;
    run_ensemble(model, Mode::Fb { c: contract }, cfg, grid, tol_s)
}

/// Simulates a quadratic-penalty contract while the agent plays the fixed
/// control `effort` instead of the maximizer.
pub fn simulate_cpt_deviation(
    model: &ModelSpec,
    contract: &ContractCpt,
    effort: &[f64],
    cfg: &SimConfig,
    grid: &ControlGrid,
) -> Result<PathEnsemble> {
    model.check_control(effort)?;
    run_ensemble(model, Mode::DevCpt { c: contract, effort }, cfg, grid, 0.0)
}

/// Simulates a first-best contract while the agent plays the fixed control
/// `effort` instead of the band maximizer.
pub fn simulate_fb_deviation(
    model: &ModelSpec,
    contract: &ContractFb,
    effort: &[f64],
    cfg: &SimConfig,
    grid: &ControlGrid,
    tol_s: f64,
) -> Result<PathEnsemble> {
    check_tol_s(tol_s)?;
    model.check_control(effort)?;
    run_ensemble(model, Mode::DevFb { c: contract, effort }, cfg, grid, tol_s)
}

/// The agent's realized objective over the feasible paths of an ensemble:
/// `E[K_A(T)·ξ − ∫K_A c_A dt]` under a linear utility,
/// `E[U_A(ξ − ∫c_A dt)]` under an exponential one.
pub fn agent_objective(model: &ModelSpec, ensemble: &PathEnsemble) -> MCEstimate {
    let vals: Vec<f64> = ensemble
        .summaries
        .iter()
        .filter(|s| s.feasible)
        .map(|s| match &model.agent_utility {
            Utility::Linear => s.k_a_t * s.y_t - s.k_a_cost_integral,
            u @ Utility::Exponential { .. } => u.eval(s.y_t - s.cost_integral),
        })
        .collect();
    mc_estimate(&vals)
}

/// The principal's realized objective over the feasible paths:
/// `E[K_P(T)·(ℓ(X_T) − ξ) − ∫K_P c_P dt]` under a linear utility,
/// `E[U_P(ℓ(X_T) − ξ − ∫c_P dt)]` under an exponential one.
pub fn principal_objective(model: &ModelSpec, ensemble: &PathEnsemble) -> MCEstimate {
    let vals: Vec<f64> = ensemble
        .summaries
        .iter()
        .filter(|s| s.feasible)
        .map(|s| {
            let settle = model.liquidation(s.x_t) - s.y_t;
            match &model.principal_utility {
                Utility::Linear => s.k_p_t * settle - s.k_p_cp_integral,
                u @ Utility::Exponential { .. } => u.eval(settle - s.cp_integral),
            }
        })
        .collect();
    mc_estimate(&vals)
}

/// Trailing-window realized variance of a recorded path: at each grid time
/// `t_i` with `i ≥ qv_window`, the sum of the last `qv_window` squared
/// X-increments divided by the window duration.
pub fn realized_qv_density(
    ensemble: &PathEnsemble,
    path_index: usize,
    qv_window: usize,
) -> Result<QvSeries> {
    let n_steps = ensemble.time.len() - 1;
    if qv_window < 1 {
        return Err(Error::config("qv_window must be ≥ 1"));
    }
    if qv_window > n_steps {
        return Err(Error::config(format!(
            "qv_window {qv_window} exceeds the available history ({n_steps} steps)"
        )));
    }
    let trace = ensemble.traces.get(path_index).ok_or_else(|| {
        Error::config(format!(
            "path {path_index} has no recorded trace ({} recorded); raise record_paths",
            ensemble.traces.len()
        ))
    })?;
    let sq: Vec<f64> = trace.x.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).collect();
    let span = qv_window as f64 * ensemble.dt;
    let mut sum: f64 = sq[..qv_window].iter().sum();
    let mut t = Vec::with_capacity(n_steps - qv_window + 1);
    let mut estimate = Vec::with_capacity(n_steps - qv_window + 1);
    t.push(ensemble.time[qv_window]);
    estimate.push(sum / span);
    for i in qv_window..n_steps {
        sum += sq[i] - sq[i - qv_window];
        t.push(ensemble.time[i + 1]);
        estimate.push(sum / span);
    }
    Ok(QvSeries { t, estimate })
}

// ---------------------------------------------------------------------------
// Engine internals
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Mode<'a> {
    Cpt { c: &'a ContractCpt },
    Fb { c: &'a ContractFb },
    DevCpt { c: &'a ContractCpt, effort: &'a [f64] },
    DevFb { c: &'a ContractFb, effort: &'a [f64] },
}

impl Mode<'_> {
    fn y0(&self) -> f64 {
        match self {
            Mode::Cpt { c } | Mode::DevCpt { c, .. } => c.y0,
            Mode::Fb { c } | Mode::DevFb { c, .. } => c.y0,
        }
    }

    fn constant_policies(&self) -> bool {
        match self {
            Mode::Cpt { c } | Mode::DevCpt { c, .. } => {
                c.z_policy.is_constant() && c.gamma_policy.is_constant()
            }
            Mode::Fb { c } | Mode::DevFb { c, .. } => {
                c.z_policy.is_constant() && c.sigma_policy.is_constant()
            }
        }
    }
}

fn check_tol_s(tol_s: f64) -> Result<()> {
    if !(tol_s.is_finite() && tol_s > 0.0) {
        return Err(Error::config(format!("tol_s must be positive and finite, got {tol_s}")));
    }
    Ok(())
}

/// Per-worker memo of grid maximizers keyed on the exact bits of (z, γ) or
/// (z, Σ).  Valid only when the model's argmax is state-free; constant
/// policies hit the one-entry fast slot every step.
struct ArgmaxCache {
    state_free: bool,
    last_key: Option<(u64, u64)>,
    last: Option<Vec<f64>>,
    map: HashMap<(u64, u64), Option<Vec<f64>>>,
}

impl ArgmaxCache {
    fn new(state_free: bool) -> Self {
        ArgmaxCache { state_free, last_key: None, last: None, map: HashMap::new() }
    }

    /// Returns the maximizer for the key, computing it at most once per key.
    /// `None` means the constrained problem is infeasible there.
    fn get(
        &mut self,
        a: f64,
        b: f64,
        compute: impl FnOnce() -> Result<Option<Vec<f64>>>,
    ) -> Result<Option<&[f64]>> {
        if !self.state_free {
            self.last = compute()?;
            return Ok(self.last.as_deref());
        }
        let key = (a.to_bits(), b.to_bits());
        if self.last_key != Some(key) {
            if self.map.len() > (1 << 20) {
                self.map.clear(); // memory guard for pathological policies
            }
            let entry = match self.map.entry(key) {
                std::collections::hash_map::Entry::Occupied(o) => o.into_mut(),
                std::collections::hash_map::Entry::Vacant(v) => v.insert(compute()?),
            };
            self.last = entry.clone();
            self.last_key = Some(key);
        }
        Ok(self.last.as_deref())
    }
}

/// Everything a step needs once the control question is settled.  The
/// diffusion row of the played control is written into the shared buffer.
#[derive(Clone, Copy)]
struct StepVals {
    z: f64,
    drift: f64,
    variance: f64,
    cost: f64,
    k_a: f64,
    y_drift: f64,
}

struct PathOutput {
    summary: PathSummary,
    trace: Option<PathTrace>,
}

fn run_ensemble(
    model: &ModelSpec,
    mode: Mode<'_>,
    cfg: &SimConfig,
    grid: &ControlGrid,
    tol_s: f64,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    check_grid(model, grid, "simulate")?;
    let y0 = mode.y0();
    let y0_level = match &model.agent_utility {
        Utility::Linear => y0,
        u @ Utility::Exponential { .. } => {
            if y0 >= 0.0 {
                return Err(Error::config(
                    "y0 must be negative under an exponential agent utility",
                ));
            }
            u.inverse(y0)
        }
    };
    let n_steps = cfg.n_steps;
    let dt = model.horizon / n_steps as f64;
    let mut time: Vec<f64> = (0..=n_steps).map(|i| i as f64 * dt).collect();
    time[n_steps] = model.horizon;
    let record_paths = cfg.record_paths.min(cfg.n_paths);
    let state_free = model.argmax_state_free() && mode.constant_policies();

    let workers = cfg
        .workers
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, usize::from))
        .clamp(1, cfg.n_paths);
    let chunk = cfg.n_paths.div_ceil(workers);

    let run_range = |lo: usize, hi: usize| -> Result<Vec<PathOutput>> {
        let mut cache = ArgmaxCache::new(state_free);
        let mut out = Vec::with_capacity(hi - lo);
        for p in lo..hi {
            out.push(simulate_path(
                model, mode, cfg, grid, tol_s, y0_level, dt, p, record_paths, &mut cache,
            )?);
        }
        Ok(out)
    };

    let results: Vec<Result<Vec<PathOutput>>> = if workers == 1 {
        vec![run_range(0, cfg.n_paths)]
    } else {
        thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let lo = w * chunk;
                    let hi = ((w + 1) * chunk).min(cfg.n_paths);
                    s.spawn(move || run_range(lo, hi))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("simulation worker panicked")).collect()
        })
    };

    let mut summaries = Vec::with_capacity(cfg.n_paths);
    let mut traces = Vec::with_capacity(record_paths);
    for r in results {
        for out in r? {
            summaries.push(out.summary);
            if let Some(tr) = out.trace {
                traces.push(tr);
            }
        }
    }
    Ok(PathEnsemble { time, dt, y0, y0_level, summaries, traces })
}

#[allow(clippy::too_many_arguments)]
fn simulate_path(
    model: &ModelSpec,
    mode: Mode<'_>,
    cfg: &SimConfig,
    grid: &ControlGrid,
    tol_s: f64,
    y0_level: f64,
    dt: f64,
    path_index: usize,
    record_paths: usize,
    cache: &mut ArgmaxCache,
) -> Result<PathOutput> {
    let n_steps = cfg.n_steps;
    let sqrt_dt = dt.sqrt();
    let noise_dim = model.noise_dim;
    let cara_half = model.agent_utility.risk_aversion().map_or(0.0, |g| 0.5 * g);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(cfg.stream_offset * STREAM_BLOCK + path_index as u64);

    let mut x = model.x0;
    let mut y = y0_level;
    let mut qv = 0.0_f64;
    let mut cost_integral = 0.0_f64;
    let mut k_a_cost_integral = 0.0_f64;
    let mut cp_integral = 0.0_f64;
    let mut k_p_cp_integral = 0.0_f64;
    let mut k_a_factor = 1.0_f64;
    let mut k_p_factor = 1.0_f64;
    let mut frozen_at: Option<usize> = None;

    let record = path_index < record_paths;
    let mut trace = record.then(|| {
        let mut tr = PathTrace {
            x: Vec::with_capacity(n_steps + 1),
            y: Vec::with_capacity(n_steps + 1),
            qv: Vec::with_capacity(n_steps + 1),
            cost: Vec::with_capacity(n_steps + 1),
            k_a: Vec::with_capacity(n_steps + 1),
        };
        tr.x.push(x);
        tr.y.push(y);
        tr.qv.push(0.0);
        tr.cost.push(0.0);
        tr.k_a.push(1.0);
        tr
    });

    let mut row = vec![0.0_f64; noise_dim];

    for step in 0..n_steps {
        let t = step as f64 * dt;
        if frozen_at.is_none() {
            let resolved = resolve_step(model, mode, grid, tol_s, t, x, y, cara_half, cache, &mut row)?;
            match resolved {
                None => frozen_at = Some(step),
                Some(v) => {
                    let mut noise = 0.0_f64;
                    for &sig in row.iter().take(noise_dim) {
                        let g: f64 = rng.sample(StandardNormal);
                        noise += sig * g;
                    }
                    noise *= sqrt_dt;

                    let cp = model.principal_running_cost(t, x, v.variance);
                    qv += v.variance * dt;
                    cost_integral += v.cost * dt;
                    k_a_cost_integral += k_a_factor * v.cost * dt;
                    cp_integral += cp * dt;
                    k_p_cp_integral += k_p_factor * cp * dt;
                    if v.k_a != 0.0 {
                        k_a_factor *= (-v.k_a * dt).exp();
                    }
                    let k_p_rate = model.principal_discount(t, x);
                    if k_p_rate != 0.0 {
                        k_p_factor *= (-k_p_rate * dt).exp();
                    }

                    x += v.drift * dt + noise;
                    y += v.y_drift * dt + v.z * noise;
                    if !(x.is_finite() && y.is_finite()) {
                        return Err(Error::NonFiniteState { path: path_index, step });
                    }
                }
            }
        }
        if let Some(tr) = trace.as_mut() {
            tr.x.push(x);
            tr.y.push(y);
            tr.qv.push(qv);
            tr.cost.push(cost_integral);
            tr.k_a.push(k_a_factor);
        }
    }

    let summary = PathSummary {
        x_t: x,
        y_t: y,
        qv_t: qv,
        cost_integral,
        k_a_cost_integral,
        cp_integral,
        k_p_cp_integral,
        k_a_t: k_a_factor,
        k_p_t: k_p_factor,
        feasible: frozen_at.is_none(),
        frozen_at,
    };
    Ok(PathOutput { summary, trace })
}

/// Settles the control question for one step.  Returns `None` when a
/// first-best variance prescription is unattainable (path freezes).  On
/// success the diffusion row of the played control is left in `row`.
#[allow(clippy::too_many_arguments)]
fn resolve_step(
    model: &ModelSpec,
    mode: Mode<'_>,
    grid: &ControlGrid,
    tol_s: f64,
    t: f64,
    x: f64,
    y: f64,
    cara_half: f64,
    cache: &mut ArgmaxCache,
    row: &mut [f64],
) -> Result<Option<StepVals>> {
    match mode {
        Mode::Cpt { c } => {
            let z = c.z_policy.eval(t, x, y);
            let gamma = c.gamma_policy.eval(t, x, y);
            let Some(ctrl) = cache.get(z, gamma, || {
                hamiltonian_full(model, t, x, y, z, gamma, grid).map(|e| Some(e.argmax))
            })?
            else {
                return Ok(None);
            };
            let co = model.coeffs(t, x, ctrl);
            model.diffusion_row_into(t, x, ctrl, row);
            let y_drift = co.cost + co.k_a * y + cara_half * z * z * co.variance;
            Ok(Some(StepVals {
                z,
                drift: co.drift,
                variance: co.variance,
                cost: co.cost,
                k_a: co.k_a,
                y_drift,
            }))
        }
        Mode::Fb { c } => {
            let z = c.z_policy.eval(t, x, y);
            let s = c.sigma_policy.eval(t, x, y);
            let Some(ctrl) = cache.get(z, s, || {
                hamiltonian_constrained(model, t, x, y, z, s, grid, tol_s)
                    .map(|e| e.feasible.then_some(e.argmax))
            })?
            else {
                return Ok(None);
            };
            let co = model.coeffs(t, x, ctrl);
            model.diffusion_row_into(t, x, ctrl, row);
            let y_drift = co.cost + co.k_a * y + cara_half * z * z * co.variance;
            Ok(Some(StepVals {
                z,
                drift: co.drift,
                variance: co.variance,
                cost: co.cost,
                k_a: co.k_a,
                y_drift,
            }))
        }
        Mode::DevCpt { c, effort } => {
            let z = c.z_policy.eval(t, x, y);
            let gamma = c.gamma_policy.eval(t, x, y);
            let Some(ctrl) = cache.get(z, gamma, || {
                hamiltonian_full(model, t, x, y, z, gamma, grid).map(|e| Some(e.argmax))
            })?
            else {
                return Ok(None);
            };
            let h = reward_full_unchecked(model, t, x, y, z, gamma, ctrl);
            let co = model.coeffs(t, x, effort);
            model.diffusion_row_into(t, x, effort, row);
            let y_drift = z * co.drift + (0.5 * gamma + cara_half * z * z) * co.variance - h
                + co.k_a * y;
            Ok(Some(StepVals {
                z,
                drift: co.drift,
                variance: co.variance,
                cost: co.cost,
                k_a: co.k_a,
                y_drift,
            }))
        }
        Mode::DevFb { c, effort } => {
            let z = c.z_policy.eval(t, x, y);
            let s = c.sigma_policy.eval(t, x, y);
            let Some(ctrl) = cache.get(z, s, || {
                hamiltonian_constrained(model, t, x, y, z, s, grid, tol_s)
                    .map(|e| e.feasible.then_some(e.argmax))
            })?
            else {
                return Ok(None);
            };
            let h = reward_constrained_unchecked(model, t, x, y, z, ctrl);
            let co = model.coeffs(t, x, effort);
            model.diffusion_row_into(t, x, effort, row);
            let y_drift = z * co.drift + cara_half * z * z * co.variance - h + co.k_a * y;
            Ok(Some(StepVals {
                z,
                drift: co.drift,
                variance: co.variance,
                cost: co.cost,
                k_a: co.k_a,
                y_drift,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::model_from_json;
    use approx::assert_relative_eq;

    fn sv_model() -> ModelSpec {
        model_from_json(r#"{"example": "scalar-vol"}"#).unwrap()
    }

    fn quartic_model() -> ModelSpec {
        model_from_json(r#"{"example": "quartic"}"#).unwrap()
    }

    fn dr_model() -> ModelSpec {
        model_from_json(r#"{"example": "demand-response"}"#).unwrap()
    }

    fn small_grid(model: &ModelSpec, n: usize) -> ControlGrid {
        let counts = vec![n; model.control_box.len()];
        ControlGrid::uniform(&model.control_box, &counts).unwrap()
    }

    #[test]
    fn config_validation_messages() {
        let cfg = SimConfig::new(0, 10, 1, 5);
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("n_paths must be ≥ 1"), "{err}");
        let cfg = SimConfig::new(1, 0, 1, 1);
        assert!(cfg.validate().unwrap_err().to_string().contains("n_steps"));
        let cfg = SimConfig::new(1, 250, 1, 300);
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("300") && err.contains("250"), "{err}");
    }

    #[test]
    fn deterministic_across_runs_and_workers() {
        let model = sv_model();
        let grid = small_grid(&model, 2001);
        let contract = ContractCpt::constant(-1.0, 0.5, -2.5);
        let mut cfg = SimConfig::new(8, 16, 42, 4);
        cfg.record_paths = 8;
        cfg.workers = Some(1);
        let a = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        cfg.workers = Some(3);
        let b = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        let c = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        assert_eq!(a.summaries, b.summaries);
        assert_eq!(a.traces, b.traces);
        assert_eq!(b.summaries, c.summaries);
        assert_eq!(b.traces, c.traces);
    }

    #[test]
    fn stream_offset_decouples_noise() {
        let model = sv_model();
        let grid = small_grid(&model, 501);
        let contract = ContractCpt::constant(-1.0, 0.5, -2.5);
        let mut cfg = SimConfig::new(2, 8, 7, 2);
        cfg.record_paths = 2;
        let a = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        cfg.stream_offset = 1;
        let b = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        assert_ne!(a.traces[0].x, b.traces[0].x);
    }

    #[test]
    fn quartic_gamma_zero_gives_unit_qv() {
        // Γ = 0 makes the reward u⁴ − 1 + noise-free terms: maximizer |u| = 1,
        // variance 1, so ⟨X⟩_T accumulates exactly T.
        let model = quartic_model();
        let grid = small_grid(&model, 2001);
        let contract = ContractCpt::constant(-1.0, 0.3, 0.0);
        let cfg = SimConfig::new(4, 16, 3, 4);
        let ens = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        for s in &ens.summaries {
            assert_relative_eq!(s.qv_t, 1.0, epsilon = 1e-12);
            assert!(s.feasible);
            // cost at |u| = 1 is zero
            assert_relative_eq!(s.cost_integral, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quartic_strong_penalty_freezes_output() {
        // Γ = −3 pushes the maximizer to u = 0: zero variance, X constant.
        let model = quartic_model();
        let grid = small_grid(&model, 2001);
        let contract = ContractCpt::constant(-1.0, 0.3, -3.0);
        let mut cfg = SimConfig::new(3, 12, 9, 3);
        cfg.record_paths = 1;
        let ens = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        for s in &ens.summaries {
            assert_eq!(s.x_t, model.x0);
            assert_eq!(s.qv_t, 0.0);
        }
        assert!(ens.traces[0].x.iter().all(|&v| v == model.x0));
    }

    #[test]
    fn fb_quarter_variance_qv() {
        let model = quartic_model();
        let grid = small_grid(&model, 2001); // step 1e-3: u = ±0.5 on the lattice
        let contract = ContractFb::constant(-1.0, 0.3, 0.25);
        let cfg = SimConfig::new(4, 16, 11, 4);
        let ens = simulate_fb(&model, &contract, &cfg, &grid, 1e-9).unwrap();
        for s in &ens.summaries {
            assert!(s.feasible);
            assert_relative_eq!(s.qv_t, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn fb_and_cpt_coincide_when_binding() {
        // Scalar-vol: Γ = 0 maximizer is u = 1; Σ = 1 selects the same control.
        // Same seed, same reduced dynamics: bit-identical paths.
        let model = sv_model();
        let grid = small_grid(&model, 2001);
        let cpt = ContractCpt::constant(-1.0, 0.5, 0.0);
        let fb = ContractFb::constant(-1.0, 0.5, 1.0);
        let mut cfg = SimConfig::new(5, 32, 17, 8);
        cfg.record_paths = 5;
        let a = simulate_cpt(&model, &cpt, &cfg, &grid).unwrap();
        let b = simulate_fb(&model, &fb, &cfg, &grid, model.default_tol_s(&grid)).unwrap();
        assert_eq!(a.summaries, b.summaries);
        assert_eq!(a.traces, b.traces);
    }

    #[test]
    fn fb_infeasible_variance_freezes_all_paths() {
        let model = quartic_model();
        let grid = small_grid(&model, 2001);
        let contract = ContractFb::constant(-1.0, 0.3, 2.0); // variance ≤ 1 on U
        let cfg = SimConfig::new(3, 8, 5, 2);
        let ens = simulate_fb(&model, &contract, &cfg, &grid, 1e-6).unwrap();
        for s in &ens.summaries {
            assert!(!s.feasible);
            assert_eq!(s.frozen_at, Some(0));
            assert_eq!(s.x_t, model.x0);
        }
        assert_eq!(ens.n_feasible(), 0);
        let obj = agent_objective(&model, &ens);
        assert_eq!(obj.n, 0);
        assert!(obj.mean.is_nan());
    }

    #[test]
    fn cara_on_policy_mean_is_promised_value() {
        // Exponential agent: E[U_A(Y_T − ∫c)] = y0 exactly at finite Δt;
        // only Monte Carlo noise remains.
        let model = sv_model();
        let grid = small_grid(&model, 4001);
        let contract = ContractCpt::constant(-1.0, 0.5, -2.5);
        let cfg = SimConfig::new(2000, 64, 23, 8);
        let ens = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        let est = agent_objective(&model, &ens);
        assert_eq!(est.n, 2000);
        assert!(
            (est.mean - (-1.0)).abs() <= 3.0 * est.std_error,
            "mean {} se {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn linear_zero_cost_martingale() {
        // Quartic with Γ = 0: played control has zero cost and zero drift, so
        // Y_T is a discrete martingale started at y0.
        let model = quartic_model();
        let grid = small_grid(&model, 2001);
        let contract = ContractCpt::constant(0.7, 0.3, 0.0);
        let cfg = SimConfig::new(4000, 32, 29, 8);
        let ens = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        let vals: Vec<f64> = ens.summaries.iter().map(|s| s.y_t).collect();
        let est = mc_estimate(&vals);
        assert!(
            (est.mean - 0.7).abs() <= 3.0 * est.std_error,
            "mean {} se {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn bookkeeping_identity_on_traces() {
        let model = dr_model();
        let counts = vec![41, 41, 201, 201];
        let grid = ControlGrid::uniform(&model.control_box, &counts).unwrap();
        let contract = ContractCpt::constant(-0.8, -0.4, -1.0);
        let mut cfg = SimConfig::new(3, 24, 31, 6);
        cfg.record_paths = 3;
        let ens = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        for (tr, s) in ens.traces.iter().zip(&ens.summaries) {
            let total: f64 = tr.y.windows(2).map(|w| w[1] - w[0]).sum();
            assert!(
                (ens.y0_level + total - s.y_t).abs() <= 1e-10,
                "bookkeeping drift {}",
                (ens.y0_level + total - s.y_t).abs()
            );
            // QV is non-decreasing along every recorded path.
            assert!(tr.qv.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn qv_density_recovers_constant_variance() {
        let model = quartic_model();
        let grid = small_grid(&model, 2001);
        let contract = ContractCpt::constant(-1.0, 0.3, 0.0); // variance ≡ 1
        let mut cfg = SimConfig::new(1, 2000, 37, 100);
        cfg.record_paths = 1;
        let ens = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        let series = realized_qv_density(&ens, 0, 100).unwrap();
        assert_eq!(series.estimate.len(), 2000 - 100 + 1);
        // ~20 effectively independent windows of 100 increments: sd ≈ 0.03.
        let avg: f64 = series.estimate.iter().sum::<f64>() / series.estimate.len() as f64;
        assert!((avg - 1.0).abs() < 0.1, "avg {avg}");
        // Full-window variant equals total QV over the horizon.
        let full = realized_qv_density(&ens, 0, 2000).unwrap();
        assert_eq!(full.estimate.len(), 1);
        assert_relative_eq!(
            full.estimate[0],
            ens.traces[0].x.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>()
                / model.horizon,
            epsilon = 1e-12
        );
    }

    #[test]
    fn qv_density_zero_variance_is_zero() {
        let model = quartic_model();
        let grid = small_grid(&model, 2001);
        let contract = ContractFb::constant(-1.0, 0.3, 0.0);
        let mut cfg = SimConfig::new(1, 200, 41, 50);
        cfg.record_paths = 1;
        let ens = simulate_fb(&model, &contract, &cfg, &grid, 1e-9).unwrap();
        let series = realized_qv_density(&ens, 0, 50).unwrap();
        assert!(series.estimate.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn qv_density_errors() {
        let model = quartic_model();
        let grid = small_grid(&model, 501);
        let contract = ContractCpt::constant(-1.0, 0.3, 0.0);
        let mut cfg = SimConfig::new(2, 250, 43, 10);
        cfg.record_paths = 1;
        let ens = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        let err = realized_qv_density(&ens, 0, 300).unwrap_err().to_string();
        assert!(err.contains("300") && err.contains("250"), "{err}");
        let err = realized_qv_density(&ens, 1, 10).unwrap_err().to_string();
        assert!(err.contains("record_paths"), "{err}");
    }

    #[test]
    fn cara_deviation_matches_closed_form() {
        // Scalar-vol contract (Z, Γ) = (0.5, −2.5); agent deviates to u = 1.
        // E[U_A] = −exp(−γ_A (ξ0 + D·T)) with D = ½Γu² − H_A(Γ) − c(u).
        let model = sv_model();
        let grid = small_grid(&model, 100_001);
        let contract = ContractCpt::constant(-1.0, 0.5, -2.5);
        let cfg = SimConfig::new(40_000, 64, 47, 8);
        let ens = simulate_cpt_deviation(&model, &contract, &[1.0], &cfg, &grid).unwrap();
        let est = agent_objective(&model, &ens);
        let d = 0.5 * (-2.5) - (-(2.5_f64).sqrt()) - 0.5;
        let expected = -(-d).exp(); // γ_A = 1, ξ0 = 0, T = 1
        assert_relative_eq!(expected, -1.1839557588361066, max_relative = 1e-12);
        assert!(
            (est.mean - expected).abs() <= 4.0 * est.std_error + 5.0 * ens.dt,
            "mean {} expected {expected} se {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn on_policy_deviation_consistency() {
        // Deviating to the maximizer itself reproduces on-policy values up to
        // floating-point cancellation in the contract form.
        let model = sv_model();
        let grid = small_grid(&model, 100_001);
        let contract = ContractCpt::constant(-1.0, 0.5, -4.0);
        let mut cfg = SimConfig::new(4, 32, 53, 8);
        cfg.record_paths = 4;
        // argmax at Γ = −4 is (−Γ)^{-1/4} = 1/√2 ≈ 0.7071; snap to the grid.
        let axis = grid.axes()[0].clone();
        let target = 0.5_f64.sqrt();
        let u = axis
            .iter()
            .copied()
            .min_by(|a, b| {
                (a - target).abs().partial_cmp(&(b - target).abs()).unwrap()
            })
            .unwrap();
        let on = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        let dev = simulate_cpt_deviation(&model, &contract, &[u], &cfg, &grid).unwrap();
        for (a, b) in on.summaries.iter().zip(&dev.summaries) {
            assert_relative_eq!(a.x_t, b.x_t, epsilon = 1e-9);
            assert_relative_eq!(a.y_t, b.y_t, epsilon = 1e-9);
        }
    }

    #[test]
    fn custom_discount_factor_decays() {
        let json = r#"{
            "custom": {
                "horizon": 1.0, "x0": 0.0,
                "control_box": [[0.1, 1.0]],
                "reservation": 0.0,
                "agent_utility": "linear",
                "principal_utility": "linear",
                "drift": [[{"coef": 0.2, "u_pow": 1}]],
                "vol": [[{"coef": 1.0, "u_pow": 1}]],
                "cost": [{"coef": 0.5, "u_pow": 2}],
                "agent_discount": [{"coef": 0.1}],
                "principal_discount": [{"coef": 0.05}],
                "liquidation": [{"coef": 1.0, "x_pow": 1}]
            }
        }"#;
        let model = model_from_json(json).unwrap();
        let grid = small_grid(&model, 501);
        let contract = ContractCpt::constant(0.1, 0.2, -1.0);
        let mut cfg = SimConfig::new(2, 20, 59, 5);
        cfg.record_paths = 1;
        let ens = simulate_cpt(&model, &contract, &cfg, &grid).unwrap();
        for s in &ens.summaries {
            assert_relative_eq!(s.k_a_t, (-0.1_f64).exp(), epsilon = 1e-12);
            assert_relative_eq!(s.k_p_t, (-0.05_f64).exp(), epsilon = 1e-12);
        }
        let tr = &ens.traces[0];
        assert!(tr.k_a.windows(2).all(|w| w[1] <= w[0] && w[1] > 0.0));
    }

    #[test]
    fn non_finite_state_is_reported() {
        // Cumulative drift 4e308 overflows f64 partway through the horizon.
        let json = r#"{
            "custom": {
                "horizon": 4.0, "x0": 0.0,
                "control_box": [[0.0, 1.0]],
                "reservation": 0.0,
                "agent_utility": "linear",
                "principal_utility": "linear",
                "drift": [[{"coef": 1e308}]],
                "vol": [[{"coef": 1.0}]],
                "cost": [{"coef": 0.0}],
                "agent_discount": [],
                "principal_discount": [],
                "liquidation": [{"coef": 1.0, "x_pow": 1}]
            }
        }"#;
        let model = model_from_json(json).unwrap();
        let grid = small_grid(&model, 11);
        let contract = ContractCpt::constant(0.0, 0.0, 0.0);
        let cfg = SimConfig::new(1, 64, 61, 8);
        let err = simulate_cpt(&model, &contract, &cfg, &grid).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { path: 0, .. }), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn cara_rejects_nonnegative_y0() {
        let model = sv_model();
        let grid = small_grid(&model, 101);
        let contract = ContractCpt::constant(0.5, 0.5, -2.5);
        let cfg = SimConfig::new(1, 4, 1, 1);
        let err = simulate_cpt(&model, &contract, &cfg, &grid).unwrap_err().to_string();
        assert!(err.contains("y0"), "{err}");
    }

    #[test]
    fn state_dependent_policy_runs() {
        let model = sv_model();
        let grid = small_grid(&model, 2001);
        let contract = ContractFb {
            y0: -1.0,
            z_policy: Policy::from_fn(|_, x, _| 0.4 + 0.1 * x.tanh()),
            sigma_policy: Policy::from_fn(|_, x, _| 0.6 + 0.2 * x.tanh()),
        };
        let mut cfg = SimConfig::new(6, 16, 67, 4);
        cfg.workers = Some(2);
        let a = simulate_fb(&model, &contract, &cfg, &grid, 0.05).unwrap();
        cfg.workers = Some(3);
        let b = simulate_fb(&model, &contract, &cfg, &grid, 0.05).unwrap();
        assert_eq!(a.summaries, b.summaries);
        assert!(a.summaries.iter().all(|s| s.feasible));
    }

    #[test]
    fn mc_estimate_basics() {
        let est = mc_estimate(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(est.mean, 2.5);
        // sample variance 5/3, se = sqrt(5/12)
        assert_relative_eq!(est.std_error, (5.0_f64 / 12.0).sqrt(), epsilon = 1e-15);
        assert_eq!(mc_estimate(&[7.0]).std_error, 0.0);
        assert_eq!(mc_estimate(&[]).n, 0);
    }
}
