use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edge_mi::cli::{exit, SCHEMA_VERSION};
use serde_json::Value;
use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edge-mi")).args(args).env_remove("EDGE_SEED").output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn dependent_pair(dir: &Path) -> (String, String) {
    let x = write(dir, "x.csv", "x\n0.1\n0.1\n0.9\n0.9\n");
    let y = write(dir, "y.csv", "y\n0.1\n0.1\n0.9\n0.9\n");
    (x.to_str().unwrap().into(), y.to_str().unwrap().into())
}

#[test]
fn estimate_hand_example() {
    let dir = TempDir::new().unwrap();
    let (x, y) = dependent_pair(dir.path());
    let base = ["estimate", "--x", &x, "--y", &y, "--mode", "exact", "--single-epsilon", "0.5", "--shift", "0"];
    let nats = json(&bin(&base));
    assert_eq!(nats["schema_version"], SCHEMA_VERSION);
    assert!((nats["result"]["estimate"].as_f64().unwrap() - std::f64::consts::LN_2).abs() <= 1e-6);
    let mut with_bits = base.to_vec();
    with_bits.push("--bits");
    let bits = json(&bin(&with_bits));
    assert!((bits["result"]["estimate"].as_f64().unwrap() - 1.0).abs() <= 1e-12);
    assert_eq!(bits["config"]["estimator"]["units"], "bits");
}

#[test]
fn estimate_writes_csv_report_to_file() {
    let dir = TempDir::new().unwrap();
    let (x, y) = dependent_pair(dir.path());
    let out = dir.path().join("r.csv");
    let o = bin(&[
        "estimate", "--x", &x, "--y", &y, "--mode", "exact", "--epsilon", "0.5", "--shift", "0", "--format", "csv", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with(&format!("# schema_version={SCHEMA_VERSION}\n")));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    let header: Vec<&str> = body[0].split(',').collect();
    assert_eq!(header, ["kind", "t", "epsilon", "estimate", "weight"]);
    let est: f64 = body[1].split(',').nth(3).unwrap().parse().unwrap();
    assert!((est - std::f64::consts::LN_2).abs() <= 1e-12);
}

#[test]
fn input_errors_exit_65_with_diagnostics() {
    let dir = TempDir::new().unwrap();
    let (x, y) = dependent_pair(dir.path());
    let empty = write(dir.path(), "empty.csv", "");
    let header_only = write(dir.path(), "h.csv", "a,b\n");
    let bad = write(dir.path(), "bad.csv", "a,b\n1,2\n3,oops\n");
    let ragged = write(dir.path(), "rag.csv", "a,b\n1,2\n3\n");
    let nan = write(dir.path(), "nan.csv", "a\nNaN\n");
    let short = write(dir.path(), "short.csv", "y\n0.1\n");
    let missing = dir.path().join("missing.csv");

    for p in [&empty, &header_only] {
        let o = bin(&["estimate", "--x", p.to_str().unwrap(), "--y", &y]);
        assert_eq!(o.status.code(), Some(exit::INPUT), "{}", stderr(&o));
    }
    let o = bin(&["estimate", "--x", bad.to_str().unwrap(), "--y", &y]);
    assert_eq!(o.status.code(), Some(exit::INPUT));
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("column 2") && e.contains("oops"), "{e}");
    let o = bin(&["estimate", "--x", ragged.to_str().unwrap(), "--y", &y]);
    assert_eq!(o.status.code(), Some(exit::INPUT));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    let o = bin(&["estimate", "--x", nan.to_str().unwrap(), "--y", &y]);
    assert_eq!(o.status.code(), Some(exit::INPUT));
    let o = bin(&["estimate", "--x", &x, "--y", short.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::INPUT));
    assert!(stderr(&o).contains("rows"), "{}", stderr(&o));
    let o = bin(&["estimate", "--x", missing.to_str().unwrap(), "--y", &y]);
    assert_eq!(o.status.code(), Some(exit::INPUT));
}

#[test]
fn config_errors_exit_64() {
    let dir = TempDir::new().unwrap();
    let (x, y) = dependent_pair(dir.path());
    let cases: Vec<Vec<&str>> = vec![
        vec!["bench-mse", "--trials", "1", "--n-list", "100", "--oracle-samples", "1000"],
        vec!["estimate", "--x", &x, "--y", &y, "--epsilon", "-1"],
        vec!["estimate", "--x", &x, "--y", &y, "--g", "alpha"],
        vec!["estimate", "--x", &x, "--y", &y, "--c-h", "0"],
        vec!["solve-weights", "--t-values", "1,2", "--d", "2"],
        vec!["estimate", "--x", &x],
        vec!["no-such-command"],
    ];
    for args in cases {
        let o = bin(&args);
        assert_eq!(o.status.code(), Some(exit::CONFIG), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
    assert_eq!(bin(&["--version"]).status.code(), Some(0));
}

#[test]
fn numeric_failures_exit_70() {
    let o = bin(&["solve-weights", "--t-values", "1,2,2", "--d", "2"]);
    assert_eq!(o.status.code(), Some(exit::NUMERIC), "{}", stderr(&o));
}

#[test]
fn solve_weights_report() {
    let v = json(&bin(&["solve-weights", "--t-values", "1,2,3", "--d", "1"]));
    let w: Vec<f64> = v["result"]["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let want = [4.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0];
    assert!(w.iter().zip(want).all(|(a, b)| (a - b).abs() <= 1e-10), "{w:?}");
    assert!(v["result"]["residual"].as_f64().unwrap() <= 1e-10);
}

fn strip_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn reports_are_deterministic() {
    let args = ["bench-mse", "--n-list", "300,600", "--trials", "5", "--oracle-samples", "20000", "--seed", "3"];
    let a = strip_timing(json(&bin(&args)));
    let b = strip_timing(json(&bin(&args)));
    assert_eq!(a, b);
    let env = Command::new(env!("CARGO_BIN_EXE_edge-mi"))
        .args(&args[..args.len() - 2])
        .env("EDGE_SEED", "3")
        .output()
        .unwrap();
    assert_eq!(strip_timing(json(&env)), a);
    let other = strip_timing(json(&bin(&["bench-mse", "--n-list", "300,600", "--trials", "5", "--oracle-samples", "20000", "--seed", "4"])));
    assert_ne!(other["rows"], a["rows"]);

    let s = ["stream-demo", "--n", "600", "--every", "200"];
    assert_eq!(strip_timing(json(&bin(&s))), strip_timing(json(&bin(&s))));
}

#[test]
fn bench_mse_ensemble_improves_with_n() {
    let v = json(&bin(&[
        "bench-mse", "--n-list", "500,2000,8000", "--trials", "20", "--oracle-samples", "200000",
    ]));
    let ens: Vec<f64> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["variant"] == "ensemble")
        .map(|r| r["mse"].as_f64().unwrap())
        .collect();
    assert_eq!(ens.len(), 3);
    assert!(ens[2] < ens[1] && ens[1] < ens[0], "{ens:?}");
}

#[test]
fn bench_mse_compare_mode_adds_rows() {
    let v = json(&bin(&[
        "bench-mse", "--n-list", "400", "--trials", "3", "--oracle-samples", "5000", "--compare-mode", "exact",
    ]));
    let modes: std::collections::BTreeSet<String> =
        v["rows"].as_array().unwrap().iter().map(|r| r["mode"].as_str().unwrap().to_string()).collect();
    assert_eq!(modes.into_iter().collect::<Vec<_>>(), ["exact", "floor"]);
}

#[test]
fn stream_demo_matches_batch_rows() {
    let v = json(&bin(&["stream-demo", "--n", "1024", "--every", "256", "--single-epsilon", "0.4"]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        let o = r["online"].as_f64().unwrap();
        let b = r["batch"].as_f64().unwrap();
        assert!((o - b).abs() <= 1e-9, "{r}");
    }
}

#[test]
fn bench_runtime_reports_per_sample_cost() {
    let v = json(&bin(&["bench-runtime", "--n-list", "1000,4000", "--repeats", "1"]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["n"].as_u64().is_some()));
}
