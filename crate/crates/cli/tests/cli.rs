//! End-to-end tests of the `topokinetic` binary: exit codes, output files,
//! and byte-level determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_topokinetic"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).env_remove("TOPOKINETIC_SEED").output().unwrap()
}

fn write_sim_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("sim.toml");
    fs::write(
        &path,
        r#"
n = 10
t_end = 30.0
sample_interval = 0.5

[kernel]
type = "constant"

[metric]
type = "euclidean"
dim = 1

[init]
type = "uniform_box"
x_min = -10.0
x_max = 10.0
v_min = -10.0
v_max = 10.0
"#,
    )
    .unwrap();
    path
}

fn write_solve_config(dir: &Path, initial: &str) -> std::path::PathBuf {
    let path = dir.join("solve.toml");
    fs::write(
        &path,
        format!(
            r#"
Nx = 32
L = 1.0
velocities = [-1.0, 1.0]
dt = 0.125
t_end = 1.0

[kernel]
type = "smoothcutoff"
theta = 0.7
eps = 0.3

{initial}
"#
        ),
    )
    .unwrap();
    path
}

const HOMOGENEOUS_INIT: &str = r#"
[initial]
kind = "homogeneous"
class_weights = [0.3, 0.7]
"#;

const SINE_INIT: &str = r#"
[initial]
kind = "sine"
class_weights = [0.5, 0.5]
amplitude = 0.4
"#;

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_reaches_consensus_and_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    write_sim_config(tmp.path());
    for out in ["a", "b"] {
        let output = run(&["simulate", "--config", "sim.toml", "--out", out, "--seed", "7"], tmp.path());
        assert!(output.status.success(), "{output:?}");
    }
    let diag = csv_rows(&tmp.path().join("a/diagnostics.csv"));
    let last = diag.last().unwrap();
    assert_eq!(last[2], "1", "distinct-velocity column should end at 1");

    for file in ["trajectory.csv", "diagnostics.csv"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identically seeded runs");
    }
    assert!(tmp.path().join("a/manifest.json").exists());
}

#[test]
fn env_seed_matches_flag_seed() {
    let tmp = tempfile::tempdir().unwrap();
    write_sim_config(tmp.path());
    let flag = run(&["simulate", "--config", "sim.toml", "--out", "f", "--seed", "9"], tmp.path());
    assert!(flag.status.success());
    let env = bin()
        .args(["simulate", "--config", "sim.toml", "--out", "e"])
        .current_dir(tmp.path())
        .env("TOPOKINETIC_SEED", "9")
        .output()
        .unwrap();
    assert!(env.status.success());
    let a = fs::read(tmp.path().join("f/trajectory.csv")).unwrap();
    let b = fs::read(tmp.path().join("e/trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run(&["simulate", "--config", "nope.toml"], tmp.path());
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn invalid_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "n = 10\nbogus_key = 1\n").unwrap();
    let output = run(&["simulate", "--config", "bad.toml"], tmp.path());
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn solve_homogeneous_density_is_stationary_and_mass_constant() {
    let tmp = tempfile::tempdir().unwrap();
    write_solve_config(tmp.path(), HOMOGENEOUS_INIT);
    let output = run(&["solve", "--config", "solve.toml", "--out", "k"], tmp.path());
    assert!(output.status.success(), "{output:?}");

    let rows = csv_rows(&tmp.path().join("k/density.csv"));
    let t0: Vec<f64> = rows
        .iter()
        .filter(|r| r[0] == "0")
        .map(|r| r[2].parse().unwrap())
        .collect();
    let t_end: Vec<f64> = rows
        .iter()
        .filter(|r| r[0] == "1")
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert_eq!(t0.len(), 32);
    assert_eq!(t_end.len(), 32);
    let drift = t0
        .iter()
        .zip(&t_end)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(drift < 1e-10, "homogeneous density drift {drift}");

    for row in csv_rows(&tmp.path().join("k/mass.csv")) {
        let mass: f64 = row[1].parse().unwrap();
        assert!((mass - 1.0).abs() < 1e-12, "mass {mass} at t = {}", row[0]);
    }
}

#[test]
fn solve_strang_flag_also_conserves_mass() {
    let tmp = tempfile::tempdir().unwrap();
    write_solve_config(tmp.path(), SINE_INIT);
    let output = run(&["solve", "--config", "solve.toml", "--out", "s", "--strang"], tmp.path());
    assert!(output.status.success(), "{output:?}");
    for row in csv_rows(&tmp.path().join("s/mass.csv")) {
        let mass: f64 = row[1].parse().unwrap();
        assert!((mass - 1.0).abs() < 1e-12);
    }
}

#[test]
fn solve_dt_too_large_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    write_solve_config(tmp.path(), SINE_INIT);
    let output = run(&["solve", "--config", "solve.toml", "--dt", "1.5"], tmp.path());
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn verify_sn_constant_kernel_zero_residual() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run(&["verify", "sn", "--kernel", "constant", "--out", "v"], tmp.path());
    assert!(output.status.success(), "{output:?}");
    let rows = csv_rows(&tmp.path().join("v/verify.csv"));
    assert!(!rows.is_empty());
    for row in rows {
        assert_eq!(row[8], "0", "residual_corrected should be exactly 0");
    }
}

#[test]
fn verify_bernstein_xsq_exits_0() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run(&["verify", "bernstein", "--f", "xsq", "--out", "v"], tmp.path());
    assert!(output.status.success(), "{output:?}");
    for row in csv_rows(&tmp.path().join("v/verify.csv")) {
        let res: f64 = row[8].parse().unwrap();
        assert!(res.abs() <= 1e-12);
    }
}

#[test]
fn verify_lemma_smoothcutoff_exits_0() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run(
        &["verify", "lemma", "--kernel", "smooth-cutoff", "--p", "0.4", "--out", "v"],
        tmp.path(),
    );
    assert!(output.status.success(), "{output:?}");
    // Two cases, four ladder sizes each.
    assert_eq!(csv_rows(&tmp.path().join("v/verify.csv")).len(), 8);
}

#[test]
fn verify_changevar_exits_0() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run(&["verify", "changevar", "--out", "v"], tmp.path());
    assert!(output.status.success(), "{output:?}");
}

#[test]
fn verify_rank_exits_0() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run(&["verify", "rank", "--p", "0.3", "--out", "v", "--seed", "5"], tmp.path());
    assert!(output.status.success(), "{output:?}");
}

fn write_compare_config(dir: &Path, n_values: &str) -> std::path::PathBuf {
    let path = dir.join("compare.toml");
    fs::write(
        &path,
        format!(
            r#"
Nx = 16
L = 1.0
velocities = [-1.0, 1.0]
n_values = {n_values}
runs = 30
t = 0.5
dt = 0.125
chaos_nx = 4
seed = 42

[kernel]
type = "smoothcutoff"
theta = 0.8
eps = 0.5

[initial]
kind = "sine"
class_weights = [0.5, 0.5]
amplitude = 0.4
"#
        ),
    )
    .unwrap();
    path
}

#[test]
fn compare_ladder_exits_0_with_full_csv() {
    let tmp = tempfile::tempdir().unwrap();
    write_compare_config(tmp.path(), "[100, 200, 400]");
    let output = run(&["compare", "--config", "compare.toml", "--out", "c"], tmp.path());
    assert!(output.status.success(), "{output:?}");
    let rows = csv_rows(&tmp.path().join("c/compare.csv"));
    assert_eq!(rows.len(), 3);
    let d_rho: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(d_rho[0] > d_rho[1] && d_rho[1] > d_rho[2]);
}

#[test]
fn compare_single_n_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    write_compare_config(tmp.path(), "[100]");
    let output = run(&["compare", "--config", "compare.toml", "--out", "c"], tmp.path());
    assert_eq!(output.status.code(), Some(2));
}
