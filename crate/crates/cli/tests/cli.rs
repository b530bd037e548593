//! End-to-end runs of the `qnuis` binary.

use std::io::Write;
use std::process::{Command, Output};

use serde_json::Value;

fn qnuis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnuis"))
        .args(args)
        .env_remove("QNUIS_THREADS")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = qnuis(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("one JSON object")
}

fn f(v: &Value, key: &str) -> f64 {
    v[key]
        .as_f64()
        .unwrap_or_else(|| panic!("{key} missing in {v}"))
}

fn temp_file(name: &str, contents: &str) -> String {
    let path = std::env::temp_dir().join(format!("qnuis-{}-{name}", std::process::id()));
    let mut file = std::fs::File::create(&path).unwrap();
    file.write_all(contents.as_bytes()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn clock_sld_and_holevo_bounds() {
    let v = json(&[
        "bound",
        "--model",
        "qubit-clock",
        "--point",
        "1,0.1",
        "--interest",
        "1",
        "--bounds",
        "sld,holevo",
    ]);
    assert!((f(&v, "sld") - 1.221403).abs() < 1e-6);
    assert!((f(&v, "holevo") - 1.221403).abs() < 1e-6);
}

#[test]
fn bloch_holevo_and_nagaoka_bounds() {
    let v = json(&[
        "bound",
        "--model",
        "bloch-qubit",
        "--point",
        "0.3,0.4,0.5",
        "--interest",
        "2",
        "--weight",
        "identity",
        "--bounds",
        "holevo,nagaoka",
    ]);
    assert!((f(&v, "holevo") - 2.75).abs() < 1e-6);
    assert!((f(&v, "nagaoka") - 3.482051).abs() < 1e-6);
    assert!(v["checks"].as_object().unwrap().values().all(|c| c == true));
}

#[test]
fn missing_point_is_an_input_error() {
    let out = qnuis(&["bound", "--model", "qubit-clock", "--interest", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("point"));
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_inputs_exit_with_two() {
    for args in [
        &["bound", "--model", "no-such-model", "--point", "1"][..],
        &["bound", "--model", "qubit-clock", "--point", "1,0.1,3"],
        &["bound", "--model", "qubit-clock", "--point", "1,-0.1"],
        &[
            "bound",
            "--model",
            "qubit-clock",
            "--point",
            "1,0.1",
            "--interest",
            "1",
            "--weight",
            "1,0;0,1",
        ],
        &["bound", "--spec", "/nonexistent/spec.json"],
        &["simulate", "--model", "qubit-clock", "--point", "1,0.1"],
    ] {
        assert_eq!(qnuis(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn numerical_failure_exits_with_three() {
    // Integrating towards t = 0 drives the orthogonal nuisance coordinate γ = 0.05/t to
    // infinity, so the ODE cannot be continued.
    let out = qnuis(&[
        "orthogonalize",
        "--model",
        "qubit-clock",
        "--start",
        "0.5,0.1",
        "--grid",
        "0.5:0.0:0.1",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn all_counts_in_one_outcome_reach_the_boundary() {
    let counts = temp_file("corner.csv", "0,0\n1,0\n2,10\n");
    let out = qnuis(&[
        "model", "--model", "dice", "--point", "0.2,0.3", "--counts", &counts,
    ]);
    match out.status.code() {
        Some(0) => {
            let v: Value = serde_json::from_slice(&out.stdout).unwrap();
            assert_eq!(v["converged"], false, "{v}");
        }
        code => assert_eq!(code, Some(3)),
    }
}

#[test]
fn simulate_two_step_clock() {
    let args = [
        "simulate",
        "--model",
        "qubit-clock",
        "--point",
        "1,0.1",
        "--interest",
        "1",
        "--strategy",
        "two-step",
        "--n",
        "10000",
        "--trials",
        "2000",
        "--seed",
        "7",
    ];
    let v = json(&args);
    let bound = 0.2f64.exp();
    assert!((f(&v, "scaled_mse") / bound - 1.0).abs() < 0.10, "{v}");
}

#[test]
fn simulate_repetitive_dice() {
    let v = json(&[
        "simulate",
        "--strategy",
        "repetitive",
        "--model",
        "dice",
        "--point",
        "0.2,0.3",
        "--interest",
        "1",
        "--n",
        "10000",
        "--trials",
        "2000",
        "--seed",
        "7",
    ]);
    assert!((f(&v, "scaled_mse") / 0.16 - 1.0).abs() < 0.05, "{v}");
}

#[test]
fn single_trial_is_rejected() {
    let out = qnuis(&[
        "simulate",
        "--strategy",
        "repetitive",
        "--model",
        "dice",
        "--point",
        "0.2,0.3",
        "--interest",
        "1",
        "--n",
        "100",
        "--trials",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_is_identical_across_runs_and_thread_counts() {
    let args = [
        "simulate",
        "--model",
        "qubit-clock",
        "--point",
        "1,0.1",
        "--interest",
        "1",
        "--strategy",
        "two-step",
        "--n",
        "2000",
        "--trials",
        "200",
        "--seed",
        "3",
    ];
    let reference = qnuis(&args).stdout;
    for threads in ["1", "3", "8"] {
        let mut with = args.to_vec();
        with.extend(["--threads", threads]);
        assert_eq!(qnuis(&with).stdout, reference, "threads = {threads}");
    }
    let bound = [
        "bound",
        "--model",
        "bloch-qubit",
        "--point",
        "0.6,0.1,0.2",
        "--interest",
        "2",
        "--bounds",
        "holevo",
    ];
    let a = qnuis(&bound).stdout;
    let mut one = bound.to_vec();
    one.extend(["--threads", "1"]);
    assert_eq!(qnuis(&one).stdout, a);
}

#[test]
fn orthogonalize_clock_trajectory() {
    let out = qnuis(&[
        "orthogonalize",
        "--model",
        "qubit-clock",
        "--start",
        "0.5,0.1",
        "--grid",
        "0.5:2.0:0.05",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut reader = csv::Reader::from_reader(&out.stdout[..]);
    let headers = reader.headers().unwrap().clone();
    let col = headers
        .iter()
        .position(|h| h == "offdiag_residual")
        .unwrap();
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 31);
    for r in &rows {
        assert!(r[col].parse::<f64>().unwrap() < 1e-6);
    }
}

#[test]
fn classify_bloch_and_dice() {
    let v = json(&[
        "classify",
        "--model",
        "bloch-qubit",
        "--point",
        "0.3,0.4,0.5",
    ]);
    assert_eq!(v["d_invariant"], true);
    assert_eq!(v["asymptotically_classical"], false);
    let v = json(&["classify", "--model", "dice", "--point", "0.2,0.3"]);
    assert_eq!(v["classical"], true);
    let v = json(&[
        "classify",
        "--model",
        "dice",
        "--point",
        "0.2,0.3",
        "--grid",
        "0.1,0.1;0.3,0.4",
    ]);
    assert_eq!(v["quasi_classical"], true);
    assert_eq!(v["scope"], "sampled-grid");
}

#[test]
fn spec_file_and_counts() {
    let spec = temp_file(
        "spec.json",
        r#"{"zoo": "dice", "point": [0.2, 0.3], "partition": 1, "weight": [[1.0]]}"#,
    );
    let v = json(&[
        "bound",
        "--spec",
        &spec,
        "--bounds",
        "sld,rld",
        "--info-loss",
    ]);
    assert!((f(&v, "sld") - 0.16).abs() < 1e-9);
    assert!((f(&v, "info-loss") - 0.017143).abs() < 1e-6);

    let counts = temp_file("counts.csv", "outcome,count\n0,20\n1,30\n2,50\n");
    let v = json(&["model", "--spec", &spec, "--counts", &counts]);
    let mle: Vec<f64> = serde_json::from_value(v["mle"].clone()).unwrap();
    assert!((mle[0] - 0.2).abs() < 1e-9 && (mle[1] - 0.3).abs() < 1e-9);

    let bad = temp_file("bad.csv", "7,20\n");
    assert_eq!(
        qnuis(&["model", "--spec", &spec, "--counts", &bad])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn csv_output_has_header_and_row() {
    let out = qnuis(&[
        "bound",
        "--model",
        "dice",
        "--point",
        "0.2,0.3",
        "--interest",
        "1",
        "--output",
        "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].split(',').any(|h| h == "sld"));
}

#[test]
fn per_trial_rows() {
    let out = qnuis(&[
        "simulate",
        "--strategy",
        "repetitive",
        "--model",
        "dice",
        "--point",
        "0.2,0.3",
        "--interest",
        "1",
        "--n",
        "100",
        "--trials",
        "5",
        "--per-trial",
        "--output",
        "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("error[0],estimate[0],retreated,trial"));
}
