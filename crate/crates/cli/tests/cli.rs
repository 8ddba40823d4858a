//! End-to-end tests driving the compiled `llg` binary.

use std::path::Path;
use std::process::{Command, Output};

use llg_core::experiment::OUTPUT_ROOT_ENV;
use llg_core::mesh::{generate_structured, DiagonalRule, Mesh};

const RUN_CONFIG: &str = r#"
[mesh]
dimension = 2
bounds = [[-0.5, 0.5], [-0.5, 0.5]]
subdivisions = [4, 4]

[physics]
alpha = 1.0
beta = 1.0

[scheme]
t_end = 0.05
steps = 10
snapshot_interval = 5

[torque]
kind = "stt"
j = [1.0, 0.0]

[initial]
kind = "skyrmion"

[output]
directory = "run_out"
"#;

const ORACLE_CONFIG: &str = r#"
[mesh]
dimension = 1
bounds = [[0.0, 1.0]]
subdivisions = [16]

[scheme]
t_end = 0.05
steps = 20
snapshot_interval = 10

[initial]
kind = "rotation"

[output]
directory = "oracle_out"

[oracle]
modes = 8
quadrature_points = 64
substeps = 2
compare_times = [0.05]
"#;

fn run_llg(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llg"))
        .args(args)
        .env(OUTPUT_ROOT_ENV, root)
        .output()
        .expect("binary should launch")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no exit code (signal?)")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn run_writes_artifacts_and_exits_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), RUN_CONFIG);
    let output = run_llg(tmp.path(), &["run", config.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let out_dir = tmp.path().join("run_out");
    assert!(out_dir.join("energy.csv").is_file());
    assert!(out_dir.join("report.json").is_file());
    for step in [0, 5, 10] {
        let name = format!("snapshots/step_{step:06}.txt");
        assert!(out_dir.join(&name).is_file(), "missing {name}");
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("exchange energy"), "stdout: {stdout}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &RUN_CONFIG.replace("alpha = 1.0", "alpa = 1.0"));
    let output = run_llg(tmp.path(), &["run", config.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error:"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("does_not_exist.toml");
    let output = run_llg(tmp.path(), &["run", missing.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn solver_budget_exhaustion_aborts_with_partial_report() {
    let tmp = tempfile::tempdir().unwrap();
    let starved = RUN_CONFIG.replace(
        "snapshot_interval = 5",
        "snapshot_interval = 5\nsolver_tol = 1e-14\nsolver_max_iter = 1",
    );
    let config = write_config(tmp.path(), &starved);
    let output = run_llg(tmp.path(), &["run", config.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 3, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report = std::fs::read_to_string(tmp.path().join("run_out/report.json")).unwrap();
    assert!(report.contains("\"aborted\""), "report: {report}");
}

#[test]
fn check_mesh_structured_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = generate_structured(&[[0.0, 1.0], [0.0, 1.0]], &[8, 8], DiagonalRule::Fixed).unwrap();
    let path = tmp.path().join("mesh.txt");
    mesh.write_text(&path).unwrap();
    let output = run_llg(tmp.path(), &["check-mesh", path.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0);
    assert!(String::from_utf8_lossy(&output.stdout).contains("satisfied"));
}

#[test]
fn check_mesh_obtuse_pair_fails_sign_condition() {
    let tmp = tempfile::tempdir().unwrap();
    let coords = vec![0.0, 0.0, 1.0, 0.0, 0.5, 0.1, 0.5, -0.1];
    let elements = vec![0, 1, 2, 0, 3, 1];
    let mesh = Mesh::from_parts(2, coords, elements).unwrap();
    let path = tmp.path().join("kite.txt");
    mesh.write_text(&path).unwrap();
    let output = run_llg(tmp.path(), &["check-mesh", path.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 4);
    assert!(String::from_utf8_lossy(&output.stdout).contains("violated"));
}

#[test]
fn check_mesh_rejects_garbage() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("garbage.txt");
    std::fs::write(&path, "this is not a mesh\n").unwrap();
    let output = run_llg(tmp.path(), &["check-mesh", path.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn oracle_compare_writes_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), ORACLE_CONFIG);
    let output = run_llg(tmp.path(), &["oracle-compare", config.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert!(tmp.path().join("oracle_out/oracle_trajectory.csv").is_file());
    assert!(String::from_utf8_lossy(&output.stdout).contains("oracle L2 difference"));
}
