//! Integration tests of the worked examples and the convex-duality layer:
//! closed forms against the solver pipeline, duality verdicts per model, and
//! the correspondence round trip.

mod common;

use volpa::duality::{
    conjugate_from_constrained, default_gamma_grid, default_s_grid, duality_report,
    gamma_from_sigma, sigma_from_gamma,
};
use volpa::{
    example1_closed_form, example2_closed_form, example3_gap, hamiltonian_full, linspace,
    model_from_json, running_reward_constrained, ModelSpec,
};

fn builtin(name: &str) -> ModelSpec {
    model_from_json(&format!(r#"{{"example": "{name}"}}"#)).unwrap()
}

#[test]
fn example1_pipeline_agrees_with_its_closed_forms() {
    let sol = example1_closed_form(1.0, 1.0, 1.0, 1.0, 0.0, -1.0).unwrap();
    assert_eq!(sol.example, 1);
    for name in ["z_star", "sigma_star", "nu_star", "gamma_star", "b0"] {
        let q = sol.get(name).unwrap_or_else(|| panic!("missing {name}"));
        let err = q.abs_error.unwrap_or_else(|| panic!("{name} lacks a solver cross-check"));
        assert!(err <= 2e-3, "{name}: |closed - solver| = {err}");
    }
    assert!((sol.get("sigma_star").unwrap().closed_form - common::SV_SIGMA_STAR).abs() < 1e-15);
    assert!((sol.get("nu_star").unwrap().closed_form - common::SV_NU_STAR).abs() < 1e-15);
    assert!((sol.get("b0").unwrap().closed_form - common::SV_B0).abs() < 1e-15);
    let v_p = sol.principal_value.expect("principal value");
    assert!((v_p - common::SV_V_P).abs() < 1e-12, "V_P = {v_p}");
    assert_eq!(sol.agent_value, Some(common::SV_V_A));
}

#[test]
fn example2_pipeline_reproduces_the_separable_maps() {
    let sol = example2_closed_form(&[1.0, 1.0], &[1.0, 4.0], &[1.0, 1.0], 0.5).unwrap();
    assert_eq!(sol.example, 2);
    let sigma_bar = sol.get("sigma_bar").expect("sigma_bar");
    assert!((sigma_bar.closed_form - common::DR_SIGMA_BAR).abs() < 1e-15);
    for q in &sol.quantities {
        if let Some(err) = q.abs_error {
            assert!(err <= 5e-3, "{}: |closed - solver| = {err}", q.name);
        }
    }
}

#[test]
fn example3_gap_is_stable_in_the_grid_resolution() {
    let coarse = example3_gap(1.0, 0.0, 0.0, 1001, 41).unwrap();
    let fine = example3_gap(1.0, 0.0, 0.0, 40_001, 401).unwrap();
    for sol in [&coarse, &fine] {
        let fb = sol.get("first_best_total").unwrap().solver.unwrap();
        let restricted = sol.get("restricted_total").unwrap().solver.unwrap();
        assert!((fb - common::Q_FB_TOTAL).abs() < 1e-5);
        assert_eq!(restricted, common::Q_RESTRICTED_TOTAL);
    }
    // Refinement only sharpens the first-best scan.
    let err_coarse =
        (coarse.get("first_best_total").unwrap().solver.unwrap() - common::Q_FB_TOTAL).abs();
    let err_fine =
        (fine.get("first_best_total").unwrap().solver.unwrap() - common::Q_FB_TOTAL).abs();
    assert!(err_fine <= err_coarse + 1e-12);
}

#[test]
fn duality_verdicts_per_model() {
    // Reduced grids keep this test quick; the acceptance gate runs the
    // defaults. Verdicts must already be stable here.
    let gamma_grid = linspace(-50.0, 10.0, 12_001);
    for (name, expect_holds) in
        [("scalar-vol", true), ("demand-response", true), ("quartic", false)]
    {
        let model = builtin(name);
        let grid = model.default_grid().unwrap();
        let x = model.x0;
        let y = model.reservation_level().unwrap();
        let s_grid = default_s_grid(&model, 0.0, x, y, 0.0, &gamma_grid, &grid, 101).unwrap();
        let tol_s = model.default_tol_s(&grid);
        let report =
            duality_report(&model, 0.0, x, y, 0.0, &s_grid, &gamma_grid, &grid, tol_s, None)
                .unwrap();
        assert_eq!(report.holds, expect_holds, "{name}: max_gap = {}", report.max_gap);
        // The default S grid maps its endpoints to the gamma-grid extremes,
        // so a boundary minimizer is legitimate on the edge rows only.
        assert!(
            report.gamma_boundary_hits <= 4,
            "{name}: {} interior boundary hits — widen the gamma grid",
            report.gamma_boundary_hits
        );
        if !expect_holds {
            assert!((report.max_gap - common::Q_MAX_GAP).abs() < 0.02);
            let step = s_grid[1] - s_grid[0];
            assert!((report.witness_s - common::Q_GAP_WITNESS).abs() <= step + 1e-12);
        }
    }
}

#[test]
fn correspondence_round_trip_on_both_cara_models() {
    let gamma_grid = default_gamma_grid();
    let gamma_step = gamma_grid[1] - gamma_grid[0];

    let sv = builtin("scalar-vol");
    let sv_grid = sv.default_grid().unwrap();
    for (gamma, target) in common::SV_S_STAR_AT {
        let s = sigma_from_gamma(&sv, 0.0, 0.0, 0.0, 0.0, gamma, &sv_grid).unwrap();
        assert!((s - target).abs() < 1e-3, "S*({gamma}) = {s}, want {target}");
        let back = gamma_from_sigma(&sv, 0.0, 0.0, 0.0, 0.0, s, &gamma_grid, &sv_grid).unwrap();
        assert!((back - gamma).abs() <= 2.0 * gamma_step, "round trip {gamma} -> {back}");
    }

    let dr = builtin("demand-response");
    let dr_grid = dr.default_grid().unwrap();
    let y = dr.reservation_level().unwrap();
    for (gamma, target) in [(-1.0, common::DR_S_STAR_AT_M1), (-4.0, common::DR_S_STAR_AT_M4)] {
        let s = sigma_from_gamma(&dr, 0.0, 0.0, y, 0.0, gamma, &dr_grid).unwrap();
        assert!((s - target).abs() < 1e-3, "S*({gamma}) = {s}, want {target}");
        let back = gamma_from_sigma(&dr, 0.0, 0.0, y, 0.0, s, &gamma_grid, &dr_grid).unwrap();
        assert!((back - gamma).abs() <= 2.0 * gamma_step, "round trip {gamma} -> {back}");
    }
    // gamma*(S) at the reference level S = 0.75.
    let gamma_at =
        gamma_from_sigma(&dr, 0.0, 0.0, y, 0.0, 0.75, &gamma_grid, &dr_grid).unwrap();
    assert!((gamma_at - common::DR_GAMMA_STAR_AT_075).abs() <= 2.0 * gamma_step);
}

#[test]
fn demand_response_constrained_reward_matches_reference_point() {
    // h_c at S = sigma_bar, z = 0: the band optimum b_k = S / (sigma_bar
    // sqrt(lambda_k)) gives -sum sigma_k^2 / (2 lambda_k b_k) = -3/4.
    let dr = builtin("demand-response");
    let y = dr.reservation_level().unwrap();
    let b = [1.0, 0.5];
    let control: Vec<f64> = vec![0.0, 0.0, b[0], b[1]];
    let reward = running_reward_constrained(&dr, 0.0, 0.0, y, 0.0, &control).unwrap();
    assert!((reward - common::DR_H_C_AT_15_Z0).abs() < 1e-12, "reward = {reward}");
}

#[test]
fn conjugate_identity_smoke_per_model() {
    // Full 20-point sweeps live in the acceptance gate; here three rates per
    // model must already line up.
    let gamma_grid = default_gamma_grid();
    for name in ["scalar-vol", "demand-response", "quartic"] {
        let model = builtin(name);
        let grid = model.default_grid().unwrap();
        let x = model.x0;
        let y = model.reservation_level().unwrap();
        let s_grid = default_s_grid(&model, 0.0, x, y, 0.0, &gamma_grid, &grid, 201).unwrap();
        let tol_s = model.default_tol_s(&grid);
        for gamma in [-4.0, -1.5, -0.5] {
            let conj =
                conjugate_from_constrained(&model, 0.0, x, y, 0.0, gamma, &s_grid, &grid, tol_s)
                    .unwrap();
            let full = hamiltonian_full(&model, 0.0, x, y, 0.0, gamma, &grid).unwrap().value;
            assert!(
                (conj - full).abs() < 5e-3,
                "{name} at gamma = {gamma}: conjugate {conj} vs full {full}"
            );
        }
    }
}
