//! Command-line front end: every module is reachable as a subcommand with a
//! JSON model config as input and CSV/JSON artifacts as output.
//!
//! Exit codes follow the error taxonomy of [`crate::error::Error`]: 0 on
//! success, 1 for validation problems (including argument parsing), 2 for
//! numerical failures (infeasibility of all scanned points, non-finite
//! states).  With a fixed `--seed` every artifact file is byte-identical
//! across reruns and worker counts.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::duality::{default_s_grid, duality_report};
use crate::error::{Error, Result};
use crate::grid::linspace;
use crate::hamiltonian::{hamiltonian_constrained, hamiltonian_full};
use crate::model::{model_from_json, ModelKind, ModelSpec};
use crate::report::{format_sig12, write_duality_csv, write_hjb_csv, write_json,
    write_surface_csv, write_trace_csv};
use crate::simulate::{
    agent_objective, principal_objective, simulate_cpt, simulate_fb, ContractCpt, ContractFb,
    MCEstimate, SimConfig,
};
use crate::verify::{
    best_response_check, equivalence_scan, example1_closed_form, example1_hjb_ode,
    example2_closed_form, example3_gap, ExampleSolution,
};

/// Runs the CLI on the given argument list (`argv[0]` is the program name)
/// and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

#[derive(Parser)]
#[command(
    name = "volpa",
    version,
    about = "Principal-agent contracts with volatility control: Hamiltonians, \
             duality, simulation and worked examples"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the full and variance-constrained agent Hamiltonians at one state.
    Hamiltonian(HamiltonianArgs),
    /// Scan the Legendre-Fenchel duality gap over a variance grid.
    Duality(DualityArgs),
    /// Simulate contract dynamics under the optimal agent response.
    Simulate(SimulateArgs),
    /// Audit a first-best contract against constant deviations.
    #[command(name = "best-response")]
    BestResponse(BestResponseArgs),
    /// Brute-force both contract families over constant-policy cells.
    Equivalence(EquivalenceArgs),
    /// Reproduce a worked example (1: scalar-vol, 2: demand-response, 3: quartic).
    Example(ExampleArgs),
}

#[derive(Args)]
struct IoArgs {
    /// Model configuration file (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory for artifacts (created if missing).
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

impl IoArgs {
    fn load(&self) -> Result<(ModelSpec, PathBuf)> {
        let text = fs::read_to_string(&self.config).map_err(|e| {
            Error::config(format!("cannot read config {}: {e}", self.config.display()))
        })?;
        let model = model_from_json(&text)?;
        fs::create_dir_all(&self.out)?;
        Ok((model, self.out.clone()))
    }
}

#[derive(Args)]
struct HamiltonianArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Contract sensitivity Z.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    z: f64,
    /// Quadratic-variation penalty rate Γ for the full Hamiltonian.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    gamma: f64,
    /// Variance target Σ for the constrained Hamiltonian (skipped if absent).
    #[arg(long, value_name = "S")]
    sigma: Option<f64>,
    /// Evaluation time t.
    #[arg(long, default_value_t = 0.0)]
    t: f64,
}

#[derive(Args)]
struct DualityArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Contract sensitivity Z.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    z: f64,
    /// Number of variance levels scanned.
    #[arg(long, value_name = "N", default_value_t = 201)]
    s_steps: usize,
    /// Number of γ grid points for the conjugate (default grid on [-50, 10]).
    #[arg(long, value_name = "N", default_value_t = 60_001)]
    gamma_steps: usize,
    /// Gap tolerance; default 5x the grid resolution error.
    #[arg(long, value_name = "FLOAT")]
    tol_gap: Option<f64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ContractKind {
    /// Quadratic-variation penalty contract (Z, Γ).
    Cpt,
    /// First-best contract (Z, Σ).
    Fb,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Contract family to simulate.
    #[arg(long, value_enum, default_value_t = ContractKind::Cpt)]
    contract: ContractKind,
    /// Contract sensitivity Z.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    z: f64,
    /// Penalty rate Γ (penalty-form contract).
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    gamma: f64,
    /// Variance target Σ (first-best contract; required for --contract fb).
    #[arg(long, value_name = "S")]
    sigma: Option<f64>,
    /// Promised value y0; defaults to the model's reservation utility.
    #[arg(long, allow_hyphen_values = true)]
    y0: Option<f64>,
    /// Number of Monte Carlo paths.
    #[arg(long, value_name = "N", default_value_t = 1000)]
    paths: usize,
    /// Number of Euler steps per path.
    #[arg(long, value_name = "N", default_value_t = 1000)]
    steps: usize,
    /// Master seed for the random number streams.
    #[arg(long, value_name = "U64", default_value_t = 42)]
    seed: u64,
    /// Worker thread cap (default: available parallelism).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Number of leading paths whose traces are written as CSV.
    #[arg(long, value_name = "N", default_value_t = 1)]
    record: usize,
}

#[derive(Args)]
struct BestResponseArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Contract sensitivity Z.
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    z: f64,
    /// Declared variance level Σ of the first-best contract.
    #[arg(long, value_name = "S")]
    sigma: f64,
    /// Promised value y0; defaults to the model's reservation utility.
    #[arg(long, allow_hyphen_values = true)]
    y0: Option<f64>,
    /// Constant deviation control, comma-separated components; repeatable.
    #[arg(long = "deviation", value_name = "U1,U2,...", allow_hyphen_values = true)]
    deviations: Vec<String>,
    /// Number of Monte Carlo paths per policy.
    #[arg(long, value_name = "N", default_value_t = 10_000)]
    paths: usize,
    /// Number of Euler steps per path.
    #[arg(long, value_name = "N", default_value_t = 200)]
    steps: usize,
    /// Master seed for the random number streams.
    #[arg(long, value_name = "U64", default_value_t = 42)]
    seed: u64,
    /// Worker thread cap (default: available parallelism).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

#[derive(Args)]
struct EquivalenceArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Number of Z grid points.
    #[arg(long, value_name = "N", default_value_t = 11)]
    z_steps: usize,
    /// Number of Γ grid points.
    #[arg(long, value_name = "N", default_value_t = 11)]
    gamma_steps: usize,
    /// Number of Σ grid points.
    #[arg(long, value_name = "N", default_value_t = 11)]
    s_steps: usize,
    /// Number of Monte Carlo paths per cell.
    #[arg(long, value_name = "N", default_value_t = 2000)]
    paths: usize,
    /// Number of Euler steps per path.
    #[arg(long, value_name = "N", default_value_t = 100)]
    steps: usize,
    /// Master seed for the random number streams.
    #[arg(long, value_name = "U64", default_value_t = 42)]
    seed: u64,
    /// Worker thread cap (default: available parallelism).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

#[derive(Args)]
struct ExampleArgs {
    /// Which worked example to reproduce.
    #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
    number: u8,
    /// Output directory for artifacts (created if missing).
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Horizon T (examples 1 and 3).
    #[arg(long = "T", default_value_t = 1.0)]
    t_horizon: f64,
    /// Initial output X_0 (examples 1 and 3).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    x0: f64,
    /// Agent promise y0 (example 3).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    y0: f64,
    /// Agent risk aversion γ_A (example 1).
    #[arg(long, default_value_t = 1.0)]
    gamma_a: f64,
    /// Principal risk aversion γ_P (example 1).
    #[arg(long, default_value_t = 1.0)]
    gamma_p: f64,
    /// Variance holding cost h (example 1).
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    /// Agent reservation utility R_A (example 1).
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    r_a: f64,
    /// Backward Euler steps for the HJB curve (example 1).
    #[arg(long, value_name = "N", default_value_t = 64)]
    steps: usize,
    /// Component volatilities σ_k, comma-separated (example 2).
    #[arg(long, value_name = "LIST", default_value = "1,1")]
    sigmas: String,
    /// Component inverse vol-cost weights λ_k (example 2).
    #[arg(long, value_name = "LIST", default_value = "1,4")]
    lambdas: String,
    /// Component effort productivities μ_k (example 2).
    #[arg(long, value_name = "LIST", default_value = "1,1")]
    mus: String,
    /// Output flow benefit κ (example 2).
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    /// Variance grid points (example 1 cross-check / example 3 scan).
    #[arg(long, value_name = "N")]
    s_steps: Option<usize>,
    /// Z grid points (example 1 cross-check).
    #[arg(long, value_name = "N", default_value_t = 1001)]
    z_steps: usize,
    /// Γ grid points (example 3 scan).
    #[arg(long, value_name = "N", default_value_t = 201)]
    gamma_steps: usize,
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Hamiltonian(args) => cmd_hamiltonian(args),
        Cmd::Duality(args) => cmd_duality(args),
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::BestResponse(args) => cmd_best_response(args),
        Cmd::Equivalence(args) => cmd_equivalence(args),
        Cmd::Example(args) => cmd_example(args),
    }
}

// ---------------------------------------------------------------------------
// hamiltonian
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct HamiltonianArtifact {
    model: String,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    gamma: f64,
    h_full: f64,
    argmax_full: Vec<f64>,
    induced_variance: f64,
    sigma: Option<f64>,
    h_constrained: Option<f64>,
    argmax_constrained: Option<Vec<f64>>,
    feasible: Option<bool>,
    constraint_residual: Option<f64>,
}

fn cmd_hamiltonian(args: HamiltonianArgs) -> Result<()> {
    let (model, out) = args.io.load()?;
    let grid = model.default_grid()?;
    let x = model.x0;
    let y = model.reservation_level()?;
    let full = hamiltonian_full(&model, args.t, x, y, args.z, args.gamma, &grid)?;
    let induced = model.eval_coefficients(args.t, x, &full.argmax)?.variance;

    let mut artifact = HamiltonianArtifact {
        model: model.name.clone(),
        t: args.t,
        x,
        y,
        z: args.z,
        gamma: args.gamma,
        h_full: full.value,
        argmax_full: full.argmax.clone(),
        induced_variance: induced,
        sigma: args.sigma,
        h_constrained: None,
        argmax_constrained: None,
        feasible: None,
        constraint_residual: None,
    };
    println!("model {}  H_A({}) = {}", model.name, format_sig12(args.gamma), format_sig12(full.value));
    println!(
        "  argmax u* = [{}]  induced variance = {}",
        join_sig12(&full.argmax),
        format_sig12(induced)
    );
    if let Some(s) = args.sigma {
        let tol_s = model.default_tol_s(&grid);
        let con = hamiltonian_constrained(&model, args.t, x, y, args.z, s, &grid, tol_s)?;
        println!(
            "  H°_A({}) = {}  feasible = {}  residual = {}",
            format_sig12(s),
            format_sig12(con.value),
            con.feasible,
            format_sig12(con.constraint_residual)
        );
        artifact.h_constrained = Some(con.value);
        artifact.argmax_constrained = Some(con.argmax);
        artifact.feasible = Some(con.feasible);
        artifact.constraint_residual = Some(con.constraint_residual);
    }
    let path = out.join("hamiltonian.json");
    write_json(&path, &artifact)?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// duality
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DualitySummary {
    model: String,
    z: f64,
    holds: bool,
    max_gap: f64,
    witness_s: f64,
    tol_gap: f64,
    epsilon_grid: f64,
    gamma_boundary_hits: usize,
    n_s: usize,
    n_skipped: usize,
}

fn cmd_duality(args: DualityArgs) -> Result<()> {
    let (model, out) = args.io.load()?;
    let grid = model.default_grid()?;
    let x = model.x0;
    let y = model.reservation_level()?;
    let tol_s = model.default_tol_s(&grid);
    if args.gamma_steps < 2 {
        return Err(Error::config("gamma-steps must be ≥ 2"));
    }
    if args.s_steps < 2 {
        return Err(Error::config("s-steps must be ≥ 2"));
    }
    // The default flag values reproduce default_gamma_grid().
    let gamma_grid = linspace(-50.0, 10.0, args.gamma_steps);
    let s_grid =
        default_s_grid(&model, 0.0, x, y, args.z, &gamma_grid, &grid, args.s_steps)?;
    let report = duality_report(
        &model,
        0.0,
        x,
        y,
        args.z,
        &s_grid,
        &gamma_grid,
        &grid,
        tol_s,
        args.tol_gap,
    )?;

    println!(
        "model {}  duality holds = {}  max_gap = {}  witness_S = {}  tol_gap = {}",
        model.name,
        report.holds,
        format_sig12(report.max_gap),
        format_sig12(report.witness_s),
        format_sig12(report.tol_gap)
    );
    if !report.skipped_s.is_empty() {
        println!("  skipped {} unachievable variance levels", report.skipped_s.len());
    }
    let csv_path = out.join("duality_report.csv");
    write_duality_csv(&csv_path, &report)?;
    let summary = DualitySummary {
        model: model.name.clone(),
        z: args.z,
        holds: report.holds,
        max_gap: report.max_gap,
        witness_s: report.witness_s,
        tol_gap: report.tol_gap,
        epsilon_grid: report.epsilon_grid,
        gamma_boundary_hits: report.gamma_boundary_hits,
        n_s: report.s_grid.len(),
        n_skipped: report.skipped_s.len(),
    };
    let json_path = out.join("duality_summary.json");
    write_json(&json_path, &summary)?;
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimulateSummary {
    model: String,
    contract: String,
    z: f64,
    gamma: Option<f64>,
    sigma: Option<f64>,
    y0: f64,
    n_paths: usize,
    n_steps: usize,
    dt: f64,
    seed: u64,
    n_feasible: usize,
    agent_objective: MCEstimate,
    principal_objective: MCEstimate,
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let (model, out) = args.io.load()?;
    let grid = model.default_grid()?;
    let y0 = args.y0.unwrap_or(model.reservation);
    let mut cfg = SimConfig::new(args.paths, args.steps, args.seed, args.steps.clamp(1, 100));
    cfg.record_paths = args.record.min(args.paths);
    cfg.workers = args.workers;

    let (ens, contract_name, gamma, sigma) = match args.contract {
        ContractKind::Cpt => {
            let contract = ContractCpt::constant(y0, args.z, args.gamma);
            let ens = simulate_cpt(&model, &contract, &cfg, &grid)?;
            (ens, "cpt", Some(args.gamma), None)
        }
        ContractKind::Fb => {
            let sigma = args.sigma.ok_or_else(|| {
                Error::config("--sigma is required for the first-best contract")
            })?;
            let contract = ContractFb::constant(y0, args.z, sigma);
            let tol_s = model.default_tol_s(&grid);
            let ens = simulate_fb(&model, &contract, &cfg, &grid, tol_s)?;
            (ens, "fb", None, Some(sigma))
        }
    };

    let agent = agent_objective(&model, &ens);
    let principal = principal_objective(&model, &ens);
    println!(
        "model {}  {} contract  {} paths x {} steps  dt = {}",
        model.name,
        contract_name,
        ens.n_paths(),
        args.steps,
        format_sig12(ens.dt)
    );
    println!(
        "  feasible {}/{}  agent value = {} (se {})  principal value = {} (se {})",
        ens.n_feasible(),
        ens.n_paths(),
        format_sig12(agent.mean),
        format_sig12(agent.std_error),
        format_sig12(principal.mean),
        format_sig12(principal.std_error)
    );

    let summary = SimulateSummary {
        model: model.name.clone(),
        contract: contract_name.to_string(),
        z: args.z,
        gamma,
        sigma,
        y0,
        n_paths: ens.n_paths(),
        n_steps: args.steps,
        dt: ens.dt,
        seed: args.seed,
        n_feasible: ens.n_feasible(),
        agent_objective: agent,
        principal_objective: principal,
    };
    let json_path = out.join("simulate_summary.json");
    write_json(&json_path, &summary)?;
    println!("wrote {}", json_path.display());
    for i in 0..ens.traces.len() {
        let trace_path = out.join(format!("trace_{i}.csv"));
        write_trace_csv(&trace_path, &ens, i)?;
        println!("wrote {}", trace_path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// best-response
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BestResponseSummary {
    model: String,
    z: f64,
    sigma: f64,
    y0: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    #[serde(flatten)]
    report: crate::verify::BestResponseReport,
}

fn cmd_best_response(args: BestResponseArgs) -> Result<()> {
    let (model, out) = args.io.load()?;
    let grid = model.default_grid()?;
    let y0 = args.y0.unwrap_or(model.reservation);
    let deviations: Vec<Vec<f64>> = args
        .deviations
        .iter()
        .map(|s| parse_float_list(s, "deviation"))
        .collect::<Result<_>>()?;
    let mut cfg = SimConfig::new(args.paths, args.steps, args.seed, args.steps.clamp(1, 100));
    cfg.workers = args.workers;
    let contract = ContractFb::constant(y0, args.z, args.sigma);
    let report = best_response_check(&model, &contract, &deviations, &cfg, &grid)?;

    println!(
        "model {}  FB contract (z = {}, sigma = {}, y0 = {})",
        model.name,
        format_sig12(args.z),
        format_sig12(args.sigma),
        format_sig12(y0)
    );
    println!(
        "  on-policy value = {} (se {})  promise gap = {}  allowance = {}",
        format_sig12(report.on_policy_value.mean),
        format_sig12(report.on_policy_value.std_error),
        format_sig12(report.on_policy_value.mean - y0),
        format_sig12(report.allowance)
    );
    for (desc, est) in &report.deviation_values {
        println!(
            "  deviation {desc}: value = {} (se {})",
            format_sig12(est.mean),
            format_sig12(est.std_error)
        );
    }
    println!("  pass = {}", report.pass);

    let summary = BestResponseSummary {
        model: model.name.clone(),
        z: args.z,
        sigma: args.sigma,
        y0,
        n_paths: args.paths,
        n_steps: args.steps,
        seed: args.seed,
        report,
    };
    let json_path = out.join("best_response.json");
    write_json(&json_path, &summary)?;
    println!("wrote {}", json_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// equivalence
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EquivalenceSummary {
    model: String,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    best_cpt: crate::verify::CptOptimum,
    best_fb: crate::verify::FbOptimum,
    value_gap: f64,
    corresponding: bool,
}

fn cmd_equivalence(args: EquivalenceArgs) -> Result<()> {
    let (model, out) = args.io.load()?;
    let grid = model.default_grid()?;
    for (name, n) in [
        ("z-steps", args.z_steps),
        ("gamma-steps", args.gamma_steps),
        ("s-steps", args.s_steps),
    ] {
        if n < 1 {
            return Err(Error::config(format!("{name} must be ≥ 1")));
        }
    }
    // Default scan windows: Z covers [0, 1] (negative for the demand-response
    // model, whose agent works against negative sensitivities), Γ covers
    // [-10, 0], Σ the achievable variance range.
    let z_grid = if matches!(model.kind(), ModelKind::DemandResponse(_)) {
        linspace(-2.0, 0.0, args.z_steps)
    } else {
        linspace(0.0, 1.0, args.z_steps)
    };
    let gamma_grid = linspace(-10.0, 0.0, args.gamma_steps);
    let (v_min, v_max) = model.variance_bounds(0.0, model.x0, &grid);
    let s_lo = if v_min > 0.0 { v_min } else { v_max * 1e-6 };
    let s_grid = linspace(s_lo, v_max, args.s_steps);

    let mut cfg = SimConfig::new(args.paths, args.steps, args.seed, args.steps.clamp(1, 100));
    cfg.workers = args.workers;
    let report = equivalence_scan(&model, &z_grid, &gamma_grid, &s_grid, &cfg, &grid)?;

    println!(
        "model {}  best cpt cell: z = {}, gamma = {}, value = {} (se {})",
        model.name,
        format_sig12(report.best_cpt.z),
        format_sig12(report.best_cpt.gamma),
        format_sig12(report.best_cpt.value.mean),
        format_sig12(report.best_cpt.value.std_error)
    );
    println!(
        "  best fb cell:  z = {}, sigma = {}, value = {} (se {})",
        format_sig12(report.best_fb.z),
        format_sig12(report.best_fb.s),
        format_sig12(report.best_fb.value.mean),
        format_sig12(report.best_fb.value.std_error)
    );
    println!(
        "  value gap = {}  corresponding = {}",
        format_sig12(report.value_gap),
        report.corresponding
    );

    let cpt_path = out.join("surface_cpt.csv");
    write_surface_csv(&cpt_path, "gamma", &report.cpt_surface)?;
    let fb_path = out.join("surface_fb.csv");
    write_surface_csv(&fb_path, "s", &report.fb_surface)?;
    let summary = EquivalenceSummary {
        model: model.name.clone(),
        n_paths: args.paths,
        n_steps: args.steps,
        seed: args.seed,
        best_cpt: report.best_cpt,
        best_fb: report.best_fb,
        value_gap: report.value_gap,
        corresponding: report.corresponding,
    };
    let json_path = out.join("equivalence_summary.json");
    write_json(&json_path, &summary)?;
    println!(
        "wrote {}, {} and {}",
        cpt_path.display(),
        fb_path.display(),
        json_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// example
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Example3Artifact {
    first_best_total: f64,
    restricted_total: f64,
    gap: f64,
    solution: ExampleSolution,
}

fn cmd_example(args: ExampleArgs) -> Result<()> {
    fs::create_dir_all(&args.out)?;
    match args.number {
        1 => example1(&args),
        2 => example2(&args),
        3 => example3(&args),
        _ => unreachable!("clap range guard"),
    }
}

fn example1(args: &ExampleArgs) -> Result<()> {
    let sol = example1_closed_form(
        args.gamma_a,
        args.gamma_p,
        args.h,
        args.t_horizon,
        args.x0,
        args.r_a,
    )?;
    print_solution(&sol);
    let json_path = args.out.join("ex1_solution.json");
    write_json(&json_path, &sol)?;

    let z_grid = linspace(0.0, 1.0, args.z_steps.max(2));
    let s_steps = args.s_steps.unwrap_or(1000).max(2);
    let s_grid = linspace(1.0 / s_steps as f64, 1.0, s_steps);
    let ode = example1_hjb_ode(
        args.gamma_a,
        args.gamma_p,
        args.h,
        args.t_horizon,
        args.steps.max(1),
        &z_grid,
        &s_grid,
    )?;
    let csv_path = args.out.join("ex1_b_curve.csv");
    write_hjb_csv(&csv_path, &ode)?;
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn example2(args: &ExampleArgs) -> Result<()> {
    let sigmas = parse_float_list(&args.sigmas, "sigmas")?;
    let lambdas = parse_float_list(&args.lambdas, "lambdas")?;
    let mus = parse_float_list(&args.mus, "mus")?;
    let sol = example2_closed_form(&sigmas, &lambdas, &mus, args.kappa)?;
    print_solution(&sol);
    let json_path = args.out.join("ex2_solution.json");
    write_json(&json_path, &sol)?;
    println!("wrote {}", json_path.display());
    Ok(())
}

fn example3(args: &ExampleArgs) -> Result<()> {
    let s_steps = args.s_steps.unwrap_or(20_001);
    let sol = example3_gap(args.t_horizon, args.x0, args.y0, s_steps, args.gamma_steps)?;
    print_solution(&sol);
    let first_best_total = solved(&sol, "first_best_total")?;
    let restricted_total = solved(&sol, "restricted_total")?;
    let artifact = Example3Artifact {
        first_best_total,
        restricted_total,
        gap: first_best_total - restricted_total,
        solution: sol,
    };
    let json_path = args.out.join("ex3_gap.json");
    write_json(&json_path, &artifact)?;
    println!("wrote {}", json_path.display());
    Ok(())
}

fn solved(sol: &ExampleSolution, name: &str) -> Result<f64> {
    sol.get(name)
        .and_then(|q| q.solver)
        .ok_or_else(|| Error::config(format!("missing solver value for {name}")))
}

fn print_solution(sol: &ExampleSolution) {
    println!("example {}", sol.example);
    for q in &sol.quantities {
        match (q.solver, q.abs_error) {
            (Some(sv), Some(err)) => println!(
                "  {} = {}  [solver {}, |err| {}]",
                q.name,
                format_sig12(q.closed_form),
                format_sig12(sv),
                format_sig12(err)
            ),
            _ => println!("  {} = {}", q.name, format_sig12(q.closed_form)),
        }
    }
    if let Some(v) = sol.agent_value {
        println!("  agent value = {}", format_sig12(v));
    }
    if let Some(v) = sol.principal_value {
        println!("  principal value = {}", format_sig12(v));
    }
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

fn join_sig12(values: &[f64]) -> String {
    values.iter().map(|&v| format_sig12(v)).collect::<Vec<_>>().join(", ")
}

fn parse_float_list(text: &str, what: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::config(format!("cannot parse {what} component {s:?}")))
        })
        .collect::<Result<_>>()?;
    if parts.is_empty() {
        return Err(Error::config(format!("{what} must list at least one number")));
    }
    Ok(parts)
}

#[cfg(test)]
// Reference constants are kept verbatim at full printed precision.
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> i32 {
        run(std::iter::once("volpa").chain(args.iter().copied()))
    }

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run_args(&["--help"]), 0);
        assert_eq!(run_args(&["--version"]), 0);
        assert_eq!(run_args(&["example", "--help"]), 0);
    }

    #[test]
    fn unknown_subcommand_exits_one() {
        assert_eq!(run_args(&["frobnicate"]), 1);
        assert_eq!(run_args(&[]), 1);
        assert_eq!(run_args(&["example", "4"]), 1);
    }

    #[test]
    fn missing_config_exits_one() {
        assert_eq!(
            run_args(&["duality", "--config", "/nonexistent/model.json"]),
            1
        );
    }

    #[test]
    fn example_three_writes_gap_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let code = run_args(&[
            "example", "3", "--T", "1", "--out", out, "--s-steps", "10001",
        ]);
        assert_eq!(code, 0);
        let text = fs::read_to_string(dir.path().join("ex3_gap.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let fb = v["first_best_total"].as_f64().unwrap();
        assert!((fb - (-0.85185185185185185)).abs() < 1e-6, "{fb}");
        assert_eq!(v["restricted_total"].as_f64().unwrap(), -1.0);
    }

    #[test]
    fn simulate_rejects_zero_paths() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("model.json");
        fs::write(&config, r#"{"example": "scalar-vol"}"#).unwrap();
        let code = run_args(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--paths",
            "0",
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn parse_float_list_behaviour() {
        assert_eq!(parse_float_list("0.5", "x").unwrap(), vec![0.5]);
        assert_eq!(
            parse_float_list("1, 2,3", "x").unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        assert!(parse_float_list("", "x").is_err());
        assert!(parse_float_list("a,b", "x").is_err());
    }
}
