// Operation signatures mirror the mathematical objects (model, state, dual
// variable, grids, tolerances); bundling them into ad-hoc structs would not
// make call sites clearer.
#![allow(clippy::too_many_arguments)]

//! Numerical toolkit for continuous-time principal–agent contracts with
//! volatility control.
//!
//! The library evaluates agent Hamiltonians by grid search, tests the
//! Legendre–Fenchel duality between the variance-constrained and
//! unconstrained problems, simulates contract dynamics under optimal
//! agent response, and reproduces three closed-form worked examples.

pub mod cli;
pub mod duality;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod model;
pub mod report;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{linspace, ControlGrid, Interval};
pub use hamiltonian::{
    hamiltonian_constrained, hamiltonian_full, running_reward_constrained,
    running_reward_full, HamiltonianEval,
};
pub use model::{
    achievable_variance_set, build_model, model_from_json, CoefficientEval, ModelSpec,
    Utility, VarianceWitness,
};
pub use simulate::{
    agent_objective, mc_estimate, principal_objective, realized_qv_density, simulate_cpt,
    simulate_cpt_deviation, simulate_fb, simulate_fb_deviation, ContractCpt, ContractFb,
    MCEstimate, PathEnsemble, PathSummary, PathTrace, Policy, QvSeries, SimConfig,
};
pub use report::{format_sig12, json_string_sig12, write_json};
pub use verify::{
    best_response_check, equivalence_scan, example1_closed_form, example1_hjb_ode,
    example2_closed_form, example3_gap, BestResponseReport, EquivalenceReport, Example2Maps,
    ExampleSolution, HjbSolution, SolvedQuantity, SurfacePoint,
};
