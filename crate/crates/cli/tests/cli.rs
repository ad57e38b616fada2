use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/corpus")
        .join(name)
}

fn helfrich(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_helfrich"))
        .args(args)
        .output()
        .unwrap()
}

fn helfrich_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_helfrich"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn hessian_prints_spectrum_and_verdict() {
    let out = helfrich(&["hessian", "--beta", "2", "--gamma", "-1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("λ₁ = (6β + 5γ)/2 = 3.5"), "{text}");
    assert!(text.contains("λ₂..₉ = -γ/2 = 0.5"), "{text}");
    assert!(text.contains("verdict: strictly convex"), "{text}");

    let j = stdout_json(&helfrich(&["hessian", "--beta", "1", "--gamma", "-1.2", "--json"]));
    assert_eq!(j["verdict"], "boundary");
    assert!(j["lambda1"].as_f64().unwrap().abs() < 1e-15);
    assert_eq!(j["matrix"].as_array().unwrap().len(), 9);
}

#[test]
fn eval_sphere_bending_is_eight_pi() {
    let mesh = corpus("icosphere4.off");
    let out = helfrich(&[
        "eval",
        "--mesh",
        path_str(&mesh),
        "--beta",
        "1",
        "--gamma",
        "0",
        "--h0",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let j = stdout_json(&out);
    let bending = j["energy"]["bending"].as_f64().unwrap();
    assert!((bending - 8.0 * PI).abs() < 0.01 * 8.0 * PI, "{bending}");
    assert_eq!(j["mesh"]["vertices"], 2562);
}

#[test]
fn eval_is_byte_identical_across_runs_and_thread_counts() {
    let mesh = corpus("split_sphere.off");
    let labels = corpus("split_sphere.labels");
    let args = [
        "eval",
        "--mesh",
        path_str(&mesh),
        "--labels",
        path_str(&labels),
        "--h0",
        "0.5,-0.5",
        "--sigma",
        "1",
    ];
    let a = helfrich(&args);
    let b = helfrich(&args);
    let c = Command::new(env!("CARGO_BIN_EXE_helfrich"))
        .env("HELFRICH_THREADS", "1")
        .args(args)
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let j = stdout_json(&a);
    assert_eq!(j["params"][1]["h0"].as_f64(), Some(-0.5));
    assert_eq!(j["params"][1]["sigma"].as_f64(), Some(1.0));
}

#[test]
fn config_with_overrides_matches_fully_flagged_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(corpus("split_sphere.off"), dir.path().join("s.off")).unwrap();
    std::fs::copy(corpus("split_sphere.labels"), dir.path().join("s.labels")).unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{
  "command": "eval",
  "mesh": "s.off",
  "labels": "s.labels",
  "params": [
    {"beta": 1.0, "gamma": -0.5, "h0": 0.3, "sigma": 0.2},
    {"beta": 2.0, "gamma": -0.5, "h0": 0.0, "sigma": 0.2}
  ]
}"#,
    )
    .unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    let from_config = helfrich_in(elsewhere.path(), &["eval", "--config", path_str(&cfg), "--gamma", "-1"]);
    let flagged = helfrich(&[
        "eval",
        "--mesh",
        path_str(&dir.path().join("s.off")),
        "--labels",
        path_str(&dir.path().join("s.labels")),
        "--beta",
        "1,2",
        "--gamma",
        "-1",
        "--h0",
        "0.3,0",
        "--sigma",
        "0.2",
    ]);
    assert_eq!(
        from_config.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&from_config.stderr)
    );
    assert_eq!(from_config.stdout, flagged.stdout);

    let wrong = helfrich(&["verify", "--config", path_str(&cfg)]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn verify_corpus_sphere_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = helfrich(&[
        "verify",
        "--mesh",
        path_str(&corpus("icosphere4.off")),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let j = stdout_json(&out);
    let checks = j["checks"].as_array().unwrap();
    assert!(checks.len() >= 20);
    assert!(checks.iter().all(|c| c["pass"] == true));
    let written = std::fs::read(dir.path().join("verify.json")).unwrap();
    assert_eq!(written, out.stdout);
}

#[test]
fn verify_rejects_nonconvex_params() {
    let out = helfrich(&[
        "verify",
        "--mesh",
        path_str(&corpus("icosphere2.off")),
        "--gamma",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn minimize_writes_trajectory_mesh_and_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = helfrich(&[
        "minimize",
        "--mesh",
        path_str(&corpus("icosphere2.off")),
        "--volume",
        "3.9",
        "--max-iterations",
        "25",
        "--seed",
        "3",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("iteration,stage,energy"));
    assert_eq!(lines.count(), 26);
    let fin = off_vertex_count(&dir.path().join("final.off"));
    assert_eq!(fin, 162);
    let state: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("state.json")).unwrap()).unwrap();
    assert_eq!(state["iteration"], 25);
    assert_eq!(state["termination"]["reason"], "max_iterations");
    assert_eq!(state["targets"]["volume"].as_f64(), Some(3.9));
}

/// Vertex count of a written OFF file.
fn off_vertex_count(path: &Path) -> usize {
    helfrich::io::read_mesh(path).unwrap().n_vertices()
}

#[test]
fn infeasible_targets_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = helfrich(&[
        "minimize",
        "--mesh",
        path_str(&corpus("icosphere2.off")),
        "--area",
        "12.566370614359172",
        "--volume",
        "5",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("isoperimetric"));
    assert!(!dir.path().join("trajectory.csv").exists());
}

#[test]
fn validation_errors_exit_one() {
    let sphere = corpus("icosphere2.off");
    // two values for a single-phase mesh
    assert_eq!(
        helfrich(&["eval", "--mesh", path_str(&sphere), "--gamma", "-1,-2"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(helfrich(&["eval", "--mesh", "missing.off"]).status.code(), Some(1));
    assert_eq!(helfrich(&["eval"]).status.code(), Some(1));
    assert_eq!(helfrich(&["hessian", "--beta", "-1"]).status.code(), Some(1));
    assert_eq!(helfrich(&["frobnicate"]).status.code(), Some(1));
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_helfrich"))
        .env("HELFRICH_THREADS", "many")
        .args(["hessian"])
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));
}

#[test]
fn overlap_gate_failure_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = helfrich(&[
        "overlap",
        "--mesh",
        path_str(&corpus("split_sphere.off")),
        "--labels",
        path_str(&corpus("split_sphere.labels")),
        "--eps0",
        "0.3",
        "--out",
        path_str(dir.path()),
    ]);
    let j = stdout_json(&out);
    // at this resolution the measure exceeds eps^3/eps0 on the sampled radii
    assert_eq!(j["pass"], false);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(j["samples"].as_array().unwrap().len(), 6);
    assert!(j["slope"].as_f64().is_some());
    assert!(dir.path().join("overlap.json").exists());

    let no_labels = helfrich(&[
        "overlap",
        "--mesh",
        path_str(&corpus("icosphere2.off")),
        "--eps0",
        "0.5",
    ]);
    assert_eq!(no_labels.status.code(), Some(1));
}
