use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TWO_STATE: &str =
    r#"{"kind": "explicit", "m": [1, 1], "q": [[0, 1, 1], [1, 0, 1]], "k": [1, 1]}"#;

fn fkchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkchain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn file(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn out_dir(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn gauge_of_the_two_state_chain() {
    let dir = TempDir::new().unwrap();
    let model = file(&dir, "model.json", TWO_STATE);
    let mu = file(&dir, "mu.json", r#"{"0": 0.5}"#);
    let out = out_dir(&dir, "gauge");
    let run = fkchain(&[
        "fk",
        "gauge",
        "--model",
        &model,
        "--mu",
        &mu,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let r = report(&out);
    assert_eq!(r["ok"], true);
    assert_eq!(r["result"]["gaugeable"], true);
    let g: Vec<f64> = serde_json::from_value(r["result"]["g"].clone()).unwrap();
    assert!((g[0] - 1.5).abs() <= 1e-12 && (g[1] - 1.25).abs() <= 1e-12);
    for name in ["report.json", "table.csv", "meta.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["exit_code"], 0);
    assert_eq!(meta["command"], "fk gauge");
}

#[test]
fn conservative_torus_has_zero_bottom() {
    let dir = TempDir::new().unwrap();
    let model = file(
        &dir,
        "torus.json",
        r#"{"kind": "torus", "n": 12, "rate": 1.0}"#,
    );
    let out = out_dir(&dir, "spectral");
    let run = fkchain(&[
        "spectral",
        "report",
        "--model",
        &model,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let r = report(&out);
    assert_eq!(r["result"]["lambda_inf"].as_f64(), Some(0.0));
    assert_eq!(r["result"]["independence_verdict"], "independent");
}

#[test]
fn malformed_model_points_at_the_field() {
    let dir = TempDir::new().unwrap();
    let model = file(
        &dir,
        "bad.json",
        r#"{"kind": "explicit", "m": [1, 1], "q": [[0, 1, "fast"]], "k": [0, 0]}"#,
    );
    let run = fkchain(&["model", "validate", "--model", &model]);
    assert_eq!(run.status.code(), Some(1));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("/q/0/2"), "{err}");

    let missing = fkchain(&["model", "validate", "--model", "/nonexistent/model.json"]);
    assert_eq!(missing.status.code(), Some(1));
    let asymmetric = file(
        &dir,
        "asym.json",
        r#"{"kind": "explicit", "m": [1, 1], "q": [[0, 1, 1], [1, 0, 2]], "k": [0, 0]}"#,
    );
    assert_eq!(
        fkchain(&["model", "validate", "--model", &asymmetric])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn reports_are_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let model = file(
        &dir,
        "model.json",
        r#"{"kind": "path", "n": 6, "rate": 1.0, "boundary": "dirichlet"}"#,
    );
    let f = file(&dir, "F.json", "[[0, 1, 0.4], [2, 3, -0.7], [4, 5, 0.25]]");
    let mut texts = Vec::new();
    for threads in ["1", "3", "1"] {
        let out = out_dir(&dir, &format!("mc-{}", texts.len()));
        let run = fkchain(&[
            "mc",
            "verify",
            "--what",
            "mean-one",
            "--model",
            &model,
            "--F",
            &f,
            "--N",
            "20000",
            "--seed",
            "11",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(
            run.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&run.stderr)
        );
        texts.push((
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("table.csv")).unwrap(),
        ));
    }
    assert!(texts.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn built_models_rebuild_the_same_chain() {
    let dir = TempDir::new().unwrap();
    let model = file(
        &dir,
        "tree.json",
        r#"{"kind": "tree", "degree": 3, "depth": 3, "boundary": "reflecting"}"#,
    );
    let out = out_dir(&dir, "built");
    let run = fkchain(&[
        "model",
        "build",
        "--model",
        &model,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(0));
    let explicit = out.join("model.json");
    let again = out_dir(&dir, "rebuilt");
    let run = fkchain(&[
        "model",
        "build",
        "--model",
        explicit.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(0));
    assert_eq!(
        std::fs::read(explicit).unwrap(),
        std::fs::read(again.join("model.json")).unwrap()
    );
}

#[test]
fn girsanov_check_matches_both_routes() {
    let dir = TempDir::new().unwrap();
    let model = file(&dir, "model.json", TWO_STATE);
    let f = file(&dir, "F.json", "[[0, 1, 0.6931471805599453]]");
    let run = fkchain(&["girsanov", "check", "--model", &model, "--F", &f]);
    assert_eq!(run.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(r["result"]["lambda_match"]["matched"], true);
    assert!(r["result"]["residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn sweep_writes_one_row_per_size() {
    let dir = TempDir::new().unwrap();
    let family = file(
        &dir,
        "path.json",
        r#"{"kind": "path", "rate": 1.0, "boundary": "dirichlet"}"#,
    );
    let out = out_dir(&dir, "sweep");
    let run = fkchain(&[
        "spectral",
        "sweep",
        "--model",
        &family,
        "--sizes",
        "4-8",
        "--p",
        "2,inf",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let csv = std::fs::read_to_string(out.join("table.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("size,n,lambda2,lambda_inf"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn kato_diagnose_and_semigroup_run() {
    let dir = TempDir::new().unwrap();
    let model = file(&dir, "model.json", TWO_STATE);
    let mu = file(&dir, "mu.json", r#"{"1": 0.3}"#);
    let run = fkchain(&["kato", "diagnose", "--model", &model, "--mu", &mu]);
    assert_eq!(run.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(r["result"]["consistent"], true);

    let run = fkchain(&[
        "fk",
        "semigroup",
        "--model",
        &model,
        "--mu",
        &mu,
        "--t",
        "0.5",
    ]);
    assert_eq!(run.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(r["ok"], true);
}
