use std::path::Path;
use std::process::Command;

use serde_json::Value;

const SMALL: &str = r#"
[simulation]
t_final = 1.0
n_observed = 3
n_candidates = 40
seed = 4

[analysis]
ss_interval = [0.4, 0.8]
"#;

fn qsmooth(dir: &Path, args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_qsmooth"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("QSMOOTH_WORKERS")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "qsmooth {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn steady_state_report() {
    let dir = tempfile::tempdir().unwrap();
    qsmooth(dir.path(), &["steady"]);
    let v = json(&dir.path().join("steady.json"));
    let b: Vec<f64> = v["bloch"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(b[0].abs() < 1e-12 && (b[1] - 10.0 / 51.0).abs() < 1e-10 && (b[2] + 1.0 / 51.0).abs() < 1e-10);

    let cfg = dir.path().join("strong.toml");
    std::fs::write(&cfg, "[physics]\nomega = 500.0\n[simulation]\ndt = 1e-5\n").unwrap();
    qsmooth(dir.path(), &["steady", "--config", cfg.to_str().unwrap()]);
    let v = json(&dir.path().join("steady.json"));
    assert!(v["bloch"][1].as_f64().unwrap().abs() < 1e-2 && v["bloch"][2].as_f64().unwrap().abs() < 1e-2);
}

#[test]
fn pipeline_is_deterministic_and_resumable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_config(a.path());
    for (dir, workers) in [(a.path(), "1"), (b.path(), "3")] {
        for cmd in ["simulate", "smooth", "metrics"] {
            qsmooth(dir, &[cmd, "--config", &cfg, "--combination", "dNdY", "--workers", workers]);
        }
    }
    let hashes = |dir: &Path| -> Vec<(String, String)> {
        let m = json(&dir.join("manifest-smooth.json"));
        m["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| (o["path"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
            .collect()
    };
    assert_eq!(hashes(a.path()), hashes(b.path()));
    let summary = json(&a.path().join("dNdY/summary.json"));
    assert_eq!(summary["N_O"], 3);
    assert_eq!(summary["N_U"], 40);
    assert!(summary["R_A_ss"].as_f64().unwrap().is_finite());

    // a second invocation finds every run done and recomputes nothing
    let smoothed = a.path().join("dNdY/run_00000/smoothed.csv");
    let before = std::fs::metadata(&smoothed).unwrap().modified().unwrap();
    qsmooth(a.path(), &["smooth", "--config", &cfg, "--combination", "dNdY"]);
    assert_eq!(std::fs::metadata(&smoothed).unwrap().modified().unwrap(), before);
    let m = json(&a.path().join("manifest-smooth.json"));
    assert_eq!(m["batches"][0][1]["skipped"], 3);
    assert_eq!(m["batches"][0][1]["computed"], 0);

    // a different seed invalidates the markers
    qsmooth(a.path(), &["simulate", "--config", &cfg, "--combination", "dNdY", "--seed", "5"]);
    let m = json(&a.path().join("manifest-simulate.json"));
    assert_eq!(m["batches"][0][1]["computed"], 3);
}

#[test]
fn smoothed_output_has_endpoint_identities() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    for cmd in ["simulate", "smooth"] {
        qsmooth(dir.path(), &[cmd, "--config", &cfg, "--combination", "dYdX"]);
    }
    let text = std::fs::read_to_string(dir.path().join("dYdX/run_00001/smoothed.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 101);
    let (first, last) = (&rows[0], rows.last().unwrap());
    assert_eq!(&first[1..4], &[0.0, 0.0, 1.0]);
    assert_eq!(&first[5..8], &[0.0, 0.0, 1.0]);
    for i in 1..4 {
        assert!((last[i] - last[i + 4]).abs() < 1e-12);
    }
    assert!(rows.iter().all(|r| r[10] >= 1.0 - 1e-9 && r[10] <= 40.0 + 1e-9));
}

#[test]
fn metrics_require_smoothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    qsmooth(dir.path(), &["simulate", "--config", &cfg, "--combination", "dXdX"]);
    let out = Command::new(env!("CARGO_BIN_EXE_qsmooth"))
        .args(["metrics", "--config", &cfg, "--combination", "dXdX", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("smooth"));
}

#[test]
fn correlators_and_levels() {
    let dir = tempfile::tempdir().unwrap();
    qsmooth(dir.path(), &["reproduce", "--figure", "5"]);
    let csv = std::fs::read_to_string(dir.path().join("fig5/correlators.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "pair,tau_over_T_Omega,C2,C3_O_twice,C3_U_twice");
    assert_eq!(csv.lines().count(), 1 + 9 * 300);
    let table = json(&dir.path().join("fig5/predict.json"));
    let levels: Vec<(String, u64)> = table
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (format!("{}{}", r["dO"].as_str().unwrap(), r["dU"].as_str().unwrap()), r["level"].as_u64().unwrap()))
        .collect();
    let expected = [4, 1, 4, 2, 3, 2, 4, 1, 4];
    assert_eq!(levels.iter().map(|l| l.1).collect::<Vec<_>>(), expected);
    assert_eq!(levels[4].0, "dXdX");
}

#[test]
fn bad_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["simulate", "--combination", "dQdN"],
        vec!["reproduce", "--figure", "7"],
    ] {
        let out = Command::new(env!("CARGO_BIN_EXE_qsmooth"))
            .args(&args)
            .arg("--out-dir")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(!out.status.success(), "{args:?}");
    }
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[simulation]\ndt = 0.5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qsmooth"))
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}
