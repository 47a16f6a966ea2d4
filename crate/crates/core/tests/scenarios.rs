use std::path::Path;

use rigidflow::driver::config::RunConfig;
use rigidflow::driver::run::{execute, StopReason};
use rigidflow::driver::sweep::{sweep_outcomes, SweepParam};
use rigidflow::driver::Simulation;
use rigidflow::fields::Location;
use rigidflow::SimError;

fn bundled(name: &str) -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

fn small() -> RunConfig {
    let mut cfg = RunConfig::default_scenario();
    cfg.grid.nx = 40;
    cfg.grid.ny = 40;
    cfg.penalty.r = 0.05;
    cfg.time.t_end = 0.02;
    cfg
}

#[test]
fn bundled_default_matches_the_built_in_scenario() {
    let mut cfg = bundled("default.toml");
    cfg.output.dir = RunConfig::default_scenario().output.dir;
    assert_eq!(cfg, RunConfig::default_scenario());
}

#[test]
fn every_bundled_config_is_valid() {
    for name in ["default.toml", "zero_data.toml", "collision.toml", "fixed_body.toml"] {
        bundled(name).validate().unwrap();
    }
}

#[test]
fn default_run_reaches_the_horizon_with_green_ledger() {
    let out = execute(&bundled("default.toml"), None).unwrap();
    let r = &out.report;
    assert_eq!(r.stop, StopReason::Horizon);
    assert!((r.final_t - r.t_end).abs() <= 1e-12);
    let body = r.body.as_ref().unwrap();
    assert!(body.min_margin > 0.0);
    assert!(r.min_dissipation >= -1e-12 && r.min_eps_term >= -1e-12);
    assert!(r.min_outflow_term >= -1e-12 && r.min_convexity_slack >= -1e-12);
    assert!(r.max_mass_residual <= 1e-10);
    // the inflow carries the disc downstream without rotating it
    assert!(body.final_x[0] > 0.5 && (body.final_x[1] - 0.5).abs() < 1e-12);
    assert!(body.final_theta.abs() < 1e-12);
    assert!(body.max_isometry_defect <= 1e-12);
}

#[test]
fn early_stop_only_after_a_negative_margin() {
    let out = execute(&bundled("collision.toml"), None).unwrap();
    let r = &out.report;
    assert!(r.final_t <= r.t_end);
    assert_eq!(r.stop, StopReason::Collision);
    let (last, rest) = out.diagnostics.split_last().unwrap();
    assert!(last.margin < 0.0);
    assert!(rest.iter().all(|row| row.margin >= 0.0));
    assert_eq!(out.body_rows.len(), out.diagnostics.len());
}

#[test]
fn a_run_inside_a_sweep_equals_the_run_alone() {
    let base = small();
    let values = [1e2, 1e3];
    let swept = sweep_outcomes(&base, SweepParam::Penalty, &values).unwrap();
    for (v, inside) in values.iter().zip(&swept) {
        let alone = execute(&SweepParam::Penalty.apply(&base, *v).unwrap(), None).unwrap();
        assert_eq!(alone.diagnostics, inside.diagnostics);
        assert_eq!(alone.rho.data, inside.rho.data);
    }
}

#[test]
fn fixed_body_stays_at_rest_and_feels_drag() {
    let mut cfg = bundled("fixed_body.toml");
    cfg.time.t_end = 0.1;
    let out = execute(&cfg, None).unwrap();
    let body = out.body.as_ref().unwrap();
    assert_eq!(body.x, [0.5, 0.5]);
    let last = out.diagnostics.last().unwrap();
    assert!(last.fx > 0.0, "drag {}", last.fx);
    assert!(last.fy.abs() < 1e-10 && last.torque.abs() < 1e-10);
}

#[test]
fn failing_step_dumps_the_state() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.time.t_end = 1.0;
    cfg.time.dt = Some(0.5);
    let err = execute(&cfg, Some(root.path())).unwrap_err();
    assert!(matches!(err, SimError::CflViolation { .. }), "{err}");
    let note: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.path().join("failure.json")).unwrap()).unwrap();
    assert_eq!(note["steps"], 0);
    assert!(root.path().join("rho_failure.txt").exists());
}

#[test]
fn zero_data_keeps_everything_still() {
    let mut cfg = bundled("zero_data.toml");
    cfg.time.max_steps = Some(50);
    let mut sim = Simulation::new(&cfg).unwrap();
    let rho0 = sim.rho.clone();
    for _ in 0..50 {
        sim.advance().unwrap();
    }
    assert_eq!(sim.u.max_abs(), 0.0);
    assert_eq!(sim.rho.data, rho0.data);
    assert_eq!(sim.body.as_ref().unwrap().x, [0.5, 0.5]);
    assert_eq!(sim.rho.loc, Location::Center);
}

#[test]
fn cfl_time_step_respects_the_acoustic_limit() {
    let sim = Simulation::new(&bundled("default.toml")).unwrap();
    let dt = sim.next_dt();
    let dx = sim.grid.min_spacing();
    assert!(dt > 0.0 && dt * sim.u.max_abs() / dx < 0.4);
}
