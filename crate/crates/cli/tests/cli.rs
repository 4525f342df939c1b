//! Runs the built binary: exit-code contract, artifacts and manifests.

use std::path::Path;
use std::process::{Command, Output};

use liouville_cli::manifest::RunManifest;
use serde_json::Value;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liouville")).args(args).current_dir(dir).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn scratch() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.json"), r#"{"n": 1, "a": [[1.0]]}"#).unwrap();
    std::fs::write(dir.path().join("a2.json"), "[[1.0, 2.0], [2.0, 1.0]]").unwrap();
    dir
}

#[test]
fn degree_prints_one_in_the_lowest_region() {
    let d = scratch();
    let out = run(&["degree", "--N", "0", "--chi", "2"], d.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1");
    let out = run(&["degree", "--N", "2", "--chi", "-2"], d.path());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "6");
}

#[test]
fn scalar_global_solve_and_manifest() {
    let d = scratch();
    let out = run(&["global-solve", "--matrix", "a.json", "--alpha", "0", "--out", "run"], d.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!((v["sigma"][0].as_f64().unwrap() - 4.0).abs() < 1e-8);
    assert!((v["m"][0].as_f64().unwrap() - 4.0).abs() < 1e-8);
    assert!((v["D"][0].as_f64().unwrap() - 64f64.ln()).abs() < 1e-8);

    let dir = d.path().join("run");
    let m = RunManifest::read(&dir).unwrap();
    assert_eq!(m.command, "global-solve");
    assert_eq!(m.status, "ok");
    let names: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    assert_eq!(names, ["global-solve.json", "profile.csv", "config.json"]);
    assert!(m.invalid_artifacts(&dir).is_empty());

    // the saved config reproduces the run and its hash
    let again = run(&["global-solve", "--config", "run/config.json", "--out", "run2"], d.path());
    assert_eq!(again.status.code(), Some(0));
    let m2 = RunManifest::read(&d.path().join("run2")).unwrap();
    assert_eq!(m2.artifacts[1].sha256, m.artifacts[1].sha256);
}

#[test]
fn usage_errors_exit_64() {
    let d = scratch();
    assert_eq!(run(&["no-such-command"], d.path()).status.code(), Some(64));
    assert_eq!(run(&["degree", "--N", "x"], d.path()).status.code(), Some(64));
    assert_eq!(run(&["leading-term", "--convention-factor", "3"], d.path()).status.code(), Some(64));
    let out = run(&["check-matrix"], d.path());
    assert_eq!(out.status.code(), Some(64));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
    assert_eq!(run(&["--help"], d.path()).status.code(), Some(0));
}

#[test]
fn module_errors_exit_65_with_json() {
    let d = scratch();
    std::fs::write(d.path().join("bad.json"), "[[1.0, 2.0], [2.0]]").unwrap();
    let out = run(&["check-matrix", "--matrix", "bad.json", "--out", "err"], d.path());
    assert_eq!(out.status.code(), Some(65));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "input");
    let m = RunManifest::read(&d.path().join("err")).unwrap();
    assert_eq!((m.status.as_str(), m.exit_code), ("error", 65));
    assert!(m.invalid_artifacts(&d.path().join("err")).is_empty());

    // all masses equal to 4 is the b-coefficient regime, not the bracket one
    std::fs::write(d.path().join("pts.json"), r#"{"points": [[0.1, 0.1]]}"#).unwrap();
    let out = run(&["leading-term", "--matrix", "a.json", "--config", "pts.json"], d.path());
    assert_eq!(out.status.code(), Some(65));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "wrong_regime");
}

#[test]
fn seeded_outputs_are_byte_identical() {
    let d = scratch();
    for (dir, threads) in [("p1", "1"), ("p2", "3")] {
        let out = Command::new(env!("CARGO_BIN_EXE_liouville"))
            .args(["green-probe", "--seed", "11", "--out", dir])
            .env("TOOLKIT_THREADS", threads)
            .current_dir(d.path())
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(d.path().join("p1/probes.csv")).unwrap();
    let b = std::fs::read(d.path().join("p2/probes.csv")).unwrap();
    assert_eq!(a, b);
    let out = run(&["green-probe", "--seed", "12", "--out", "p3"], d.path());
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(a, std::fs::read(d.path().join("p3/probes.csv")).unwrap());
}

#[test]
fn gamma_qpoint_and_matrix_checks() {
    let d = scratch();
    let v = json(&run(&["check-matrix", "--matrix", "a2.json"], d.path()));
    assert_eq!((v["h1"].as_bool(), v["h2"].as_bool()), (Some(true), Some(true)));
    let q = json(&run(&["qpoint", "--matrix", "a2.json", "--N", "1"], d.path()));
    let qv = q["q"][0].as_f64().unwrap();
    assert!((qv - 8.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
    let below = json(&run(&["gamma", "--matrix", "a2.json", "--rho", "5,5"], d.path()));
    assert_eq!(below["region"]["classification"], "lower_side");
    let above = json(&run(&["gamma", "--matrix", "a2.json", "--rho", "12,12"], d.path()));
    assert_eq!(above["region"]["classification"], "upper_side");
}

#[test]
fn short_continuation_reports_max_steps() {
    let d = scratch();
    std::fs::write(
        d.path().join("pde.json"),
        r#"{"matrix": {"n": 1, "a": [[1.0]]},
            "weights": [{"kind": "trig", "constant": 1.0, "terms": [{"k": [1, 0], "cos": 0.5}]}],
            "ray": {"base": [3.0], "dir": [6.0]},
            "controls": {"ladder": [64], "max_steps": 3}}"#,
    )
    .unwrap();
    let out = run(&["pde-continue", "--config", "pde.json", "--out", "c"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["stop"]["kind"], "max_steps");
    let csv = std::fs::read_to_string(d.path().join("c/continuation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let m = RunManifest::read(&d.path().join("c")).unwrap();
    assert_eq!((m.status.as_str(), m.exit_code), ("failed", 2));
}
