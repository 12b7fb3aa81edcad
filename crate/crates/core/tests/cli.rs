//! The command-line tool end to end on a small generated corpus.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const QUICK: [&str; 8] = [
    "--set",
    "epochs=2",
    "--set",
    "predictor_epochs=2",
    "--set",
    "warmup_steps=100",
    "--set",
    "latency_warmup=2",
];

fn gesture(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gesture"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn gesture_stdin(dir: &Path, args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_gesture"))
        .current_dir(dir)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn corpus(dir: &Path) {
    let o = gesture(
        dir,
        &[
            "synth",
            "--out",
            "data",
            "--seed",
            "3",
            "--subjects",
            "3",
            "--trials",
            "2",
        ],
    );
    assert_eq!(json(&o)["trials"], 6);
}

#[test]
fn prepare_train_evaluate_infer() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    corpus(dir);

    let first = json(&gesture(
        dir,
        &["prepare", "--manifest", "data/manifest.txt", "--out", "c.bin"],
    ));
    assert_eq!(first["status"], "written");
    let again = json(&gesture(
        dir,
        &["prepare", "--manifest", "data/manifest.txt", "--out", "c.bin"],
    ));
    assert_eq!(again["status"], "hit");
    assert_eq!(first["input_hash"], again["input_hash"]);
    assert_eq!(again["features"], "K14");

    let mut args = vec!["train", "--cache", "c.bin", "--out", "m.ck", "--holdout", "B"];
    args.extend(QUICK);
    let trained = json(&gesture(dir, &args));
    assert_eq!(trained["train_trials"], 4);

    let mut args = vec!["evaluate", "--cache", "c.bin", "--fold", "C", "--out", "rep"];
    args.extend(QUICK);
    let o = gesture(dir, &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("rep/report.json")).unwrap()).unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 1);
    let mut csv = csv::Reader::from_path(dir.join("rep/report.csv")).unwrap();
    let header = csv.headers().unwrap().clone();
    for col in [
        "recognition_accuracy",
        "recognition_edit",
        "recognition_f1_50",
        "prediction_rec_accuracy",
        "traj_rec_mape_z2",
        "latency_mean_ms",
    ] {
        assert!(header.iter().any(|h| h == col), "missing {col}");
    }
    let rows: Vec<_> = csv.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "C");

    // Two windows, one of them damaged, plus a partial tail.
    let kin = std::fs::read_to_string(dir.join("data/kinematics/Synth_B001.txt")).unwrap();
    let lines: Vec<&str> = kin.lines().collect();
    let mut input: Vec<&str> = lines[..75].to_vec();
    input[40] = "1 2 nonsense";
    let o = gesture_stdin(dir, &["infer", "--checkpoint", "m.ck"], &(input.join("\n") + "\n"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0]["window"], 0);
    assert_eq!(records[0]["recognized"].as_array().unwrap().len(), 30);
    assert_eq!(records[0]["predicted"].as_array().unwrap().len(), 10);
    assert_eq!(records[0]["trajectory"].as_array().unwrap().len(), 10);
    assert!(records[0]["latency_ms"].as_f64().unwrap() > 0.0);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("skipping window 1") && err.contains("trailing"), "{err}");

    let o = gesture(
        dir,
        &["bench", "--checkpoint", "m.ck", "--iterations", "30", "--warmup", "5"],
    );
    let b = json(&o);
    assert_eq!(b["latency"]["samples"], 25);
    assert!(b["pass"].is_boolean());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(gesture(dir, &["train"]).status.code(), Some(1));
    assert_eq!(gesture(dir, &["bench", "--set", "enc_heads=7"]).status.code(), Some(1));
    assert_eq!(gesture(dir, &["--help"]).status.code(), Some(0));
    let o = gesture(dir, &["prepare", "--manifest", "missing.txt", "--out", "c.bin"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.txt"));

    corpus(dir);
    let kin = dir.join("data/kinematics/Synth_C001.txt");
    std::fs::write(&kin, "0 1 2\n").unwrap();
    let o = gesture(dir, &["prepare", "--manifest", "data/manifest.txt", "--out", "c.bin"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Synth_C001.txt"));
}

#[test]
fn untrained_bench_reports_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let b = json(&gesture(
        tmp.path(),
        &["bench", "--iterations", "40", "--warmup", "10", "--seed", "2"],
    ));
    assert_eq!(b["precision"], "f32");
    assert_eq!(b["d_in"], 14);
    assert!((b["budget_ms"].as_f64().unwrap() - 100.0 / 3.0).abs() < 1e-9);
    let mean = b["latency"]["mean_ms"].as_f64().unwrap();
    assert_eq!(b["pass"].as_bool().unwrap(), mean < 100.0 / 3.0);
}
