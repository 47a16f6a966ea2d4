use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rigidflow"))
        .args(args)
        .env("RIGIDFLOW_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        r#"
[grid]
nx = 40
ny = 40

[penalty]
r = 0.05

[body]
shape = { kind = "disc", center = [0.5, 0.5], radius = 0.15 }

[time]
t_end = 0.01

[output]
dir = "small"
"#,
    )
    .unwrap();
    path
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn run_writes_every_output_under_the_root() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small_config(root.path());
    let out = bin(root.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = root.path().join("small");
    assert_eq!(
        header(&dir.join("diagnostics.csv")),
        "t,E,dissipation,eps_term,outflow_term,convexity_slack_min,mass_residual,energy_residual,rigidity,\
         pnorm_gamma,pnorm_beta,Fx,Fy,torque,margin"
    );
    assert_eq!(header(&dir.join("body.csv")), "t,X.x,X.y,theta,V.x,V.y,w,rigidity_defect,margin");
    for f in ["report.json", "config.toml", "rho_00000.txt", "rho_final.txt", "ux_final.txt", "rho_final.vtk"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["stop"], "horizon");
    let stdout: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout["steps"], report["steps"]);
}

#[test]
fn unknown_config_keys_fail_loudly() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("typo.toml");
    std::fs::write(&cfg, "[penalty]\nepsilon = 1e-3\n").unwrap();
    let out = bin(root.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}

#[test]
fn body_too_close_is_rejected_before_any_output() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("close.toml");
    std::fs::write(
        &cfg,
        "[body]\nshape = { kind = \"disc\", center = [0.2, 0.5], radius = 0.15 }\n[output]\ndir = \"close\"\n",
    )
    .unwrap();
    let out = bin(root.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!root.path().join("close").exists());
}

#[test]
fn verify_fast_passes_and_reports_properties() {
    let root = tempfile::tempdir().unwrap();
    let out = bin(root.path(), &["verify", "--fast"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.path().join("verify/verify.json")).unwrap()).unwrap();
    assert!(report["properties"].as_array().unwrap().len() >= 30);
    assert!(report["failures"].as_array().unwrap().is_empty());
}

#[test]
fn verify_detects_a_flipped_lambda_term() {
    let root = tempfile::tempdir().unwrap();
    let out = bin(root.path(), &["verify", "--fast", "--inject-fault", "flip-lambda"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["failures"], serde_json::json!(["stress_symmetry_and_trace"]));
}

#[test]
fn sweep_writes_one_directory_per_value_and_a_summary() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small_config(root.path());
    let out = bin(root.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--param", "n", "--values", "100,1000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = root.path().join("small/sweep_n");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(summary["values"], serde_json::json!([100.0, 1000.0]));
    assert_eq!(summary["entries"].as_array().unwrap().len(), 2);
    let subdirs = std::fs::read_dir(&dir).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(subdirs, 2);
}

#[test]
fn sweep_rejects_non_monotone_values_and_unknown_parameters() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small_config(root.path());
    let c = cfg.to_str().unwrap();
    let out = bin(root.path(), &["sweep", "--config", c, "--param", "n", "--values", "100,10,1000"]);
    assert!(!out.status.success());
    let out = bin(root.path(), &["sweep", "--config", c, "--param", "mu", "--values", "1,2"]);
    assert!(!out.status.success());
}

#[test]
fn mms_continuity_reports_orders() {
    let root = tempfile::tempdir().unwrap();
    let out = bin(root.path(), &["mms", "--which", "continuity"]);
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.path().join("mms/continuity.json")).unwrap()).unwrap();
    assert_eq!(report["orders"].as_array().unwrap().len(), 3);
    assert!(bin(root.path(), &["mms", "--which", "energy"]).status.code() != Some(0));
}
