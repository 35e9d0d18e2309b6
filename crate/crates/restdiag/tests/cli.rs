use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use restdiag::linalg::{c, CMat};
use restdiag::op_core::Projection;
use serde_json::{json, Value};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_restdiag"));
    cmd.env_remove("RESTDIAG_SEED");
    cmd
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("restdiag-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(cmd: &mut Command) -> (i32, Value, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    let stdout = String::from_utf8(stdout).unwrap();
    let v = serde_json::from_str(&stdout).unwrap_or(Value::Null);
    (status.code().unwrap(), v, String::from_utf8(stderr).unwrap())
}

#[test]
fn diagonalize_round_trip_fixture() {
    let (code, v, err) = run(bin().args(["diagonalize", "--ideal", "schatten:1", "--input"]).arg(fixture("round_trip.json")));
    assert_eq!(code, 0, "{err}");
    assert_eq!(v["schema"], "restdiag/1");
    assert_eq!(v["command"], "diagonalize");
    assert!(v["diag_residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn ess_codim_finite_trace_fixture() {
    let (code, v, _) = run(bin().args(["ess-codim", "--input"]).arg(fixture("finite_trace.json")));
    assert_eq!(code, 0);
    assert_eq!(v["value"], 2);
    assert!((v["trace"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn perm_align_fixture() {
    let (code, v, _) = run(bin().args(["perm-align", "--input"]).arg(fixture("permutation.json")));
    assert_eq!(code, 0);
    assert_eq!(v["block_images_match"], true);
    let sizes: Vec<u64> = serde_json::from_value(v["mismatch_sizes"].clone()).unwrap();
    assert_eq!(sizes.last(), Some(&0));
}

#[test]
fn malformed_input_exits_one() {
    let (code, v, err) = run(bin().args(["ess-codim", "--input"]).arg(fixture("malformed.json")));
    assert_eq!(code, 1);
    assert_eq!(v, Value::Null);
    assert!(err.contains("malformed.json"), "{err}");
}

#[test]
fn unknown_flag_exits_one() {
    let (code, _, _) = run(bin().args(["ess-codim", "--frobnicate"]));
    assert_eq!(code, 1);
}

#[test]
fn precondition_failure_exits_two() {
    let t = 1e-8f64;
    let mut b = CMat::zeros(4, 1);
    b[(0, 0)] = c(t.cos(), 0.0);
    b[(1, 0)] = c(t.sin(), 0.0);
    let input = json!({
        "p": Projection::coordinate(4, &[1], false),
        "q": Projection::from_basis(b, false).unwrap(),
    });
    let path = scratch("not_fredholm.json");
    std::fs::write(&path, input.to_string()).unwrap();
    let (code, v, _) = run(bin().args(["ess-codim", "--input"]).arg(&path));
    assert_eq!(code, 2);
    assert_eq!(v["error"]["condition"], "not_fredholm_pair");
}

#[test]
fn fixtures_are_deterministic() {
    let a = bin().args(["fixture", "round-trip", "--dim", "12", "--seed", "5"]).output().unwrap();
    let b = bin().args(["fixture", "round-trip", "--dim", "12", "--seed", "5"]).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let env = bin().args(["fixture", "round-trip", "--dim", "12"]).env("RESTDIAG_SEED", "5").output().unwrap();
    assert_eq!(a.stdout, env.stdout);
    let other = bin().args(["fixture", "round-trip", "--dim", "12", "--seed", "6"]).output().unwrap();
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn bad_seed_env_is_a_config_error() {
    let (code, _, err) = run(bin().args(["fixture", "permutation"]).env("RESTDIAG_SEED", "abc"));
    assert_eq!(code, 1);
    assert!(err.contains("RESTDIAG_SEED"));
}

#[test]
fn fixture_output_feeds_back_in() {
    let path = scratch("perm.json");
    let out = bin().args(["fixture", "permutation", "--dim", "30", "--seed", "2", "--output"]).arg(&path).output().unwrap();
    assert!(out.status.success());
    let (code, v, err) = run(bin().args(["perm-align", "--input"]).arg(&path));
    assert_eq!(code, 0, "{err}");
    assert_eq!(v["block_images_match"], true);
}

#[test]
fn flags_override_config_file() {
    let cfg = scratch("config.json");
    std::fs::write(&cfg, r#"{"dim": 10, "seed": 3}"#).unwrap();
    let from_file = bin().args(["fixture", "permutation", "--config"]).arg(&cfg).output().unwrap();
    let explicit = bin().args(["fixture", "permutation", "--dim", "10", "--seed", "3"]).output().unwrap();
    assert_eq!(from_file.stdout, explicit.stdout);
    let overridden = bin().args(["fixture", "permutation", "--seed", "4", "--config"]).arg(&cfg).output().unwrap();
    let direct = bin().args(["fixture", "permutation", "--dim", "10", "--seed", "4"]).output().unwrap();
    assert_eq!(overridden.stdout, direct.stdout);
    // seed in the file beats the environment
    let with_env = bin().args(["fixture", "permutation", "--config"]).arg(&cfg).env("RESTDIAG_SEED", "9").output().unwrap();
    assert_eq!(with_env.stdout, explicit.stdout);
}

#[test]
fn invalid_tolerance_ordering_rejected() {
    let (code, _, _) = run(bin().args(["fixture", "permutation", "--tol-gap-lo", "1e-5", "--tol-gap-hi", "1e-6"]));
    assert_eq!(code, 1);
}

#[test]
fn witness_commands_report() {
    let (code, v, err) = run(bin().args(["witness", "nonlinear", "--ideal", "schatten:1", "--dim", "16"]));
    assert_eq!(code, 0, "{err}");
    assert_eq!(v["command"], "witness-nonlinear");
    let (code, v, err) = run(bin().args(["witness", "amc", "--dim", "32"]));
    assert_eq!(code, 0, "{err}");
    assert!(v["residual"].as_f64().unwrap() <= 1e-8);
}
