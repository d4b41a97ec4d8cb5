use std::path::Path;
use std::process::{Command, Output};

use readiness::features::load_features;
use readiness::ratings::load_ori;

fn readiness(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_readiness"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = readiness(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn icc_rows(dir: &Path) -> Vec<serde_json::Value> {
    let text = std::fs::read_to_string(dir.join("icc.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn gen_writes_the_requested_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("data");
    ok(&["gen", "--clips", "5", "--raters", "3", "--seed", "2", "--out", s(&out)]);

    for f in ["features.jsonl", "ground_truth.csv", "ratings.csv", "ori.csv", "splits.json", "config.json", "manifest.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let clips = load_features(&out.join("features.jsonl")).unwrap();
    assert_eq!(clips.len(), 5);
    assert!(clips.iter().all(|(_, m)| m.shape() == (900, 54)));

    let ori = load_ori(&out.join("ori.csv")).unwrap();
    assert_eq!(ori.len(), 5);
    assert!(ori.iter().all(|o| o.values.iter().all(|v| (1.0..=5.0).contains(v))));

    let raters: std::collections::BTreeSet<_> = std::fs::read_to_string(out.join("ratings.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().to_string())
        .collect();
    assert_eq!(raters.len(), 3);
}

#[test]
fn icc_of_a_constant_shift_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("r.csv");
    std::fs::write(
        &csv,
        "clip_id,segment_index,rater_id,value\nc,0,a,1\nc,0,b,2\nc,1,a,2\nc,1,b,3\nc,2,a,3\nc,2,b,4\n",
    )
    .unwrap();
    let out = tmp.path().join("icc");
    let printed = ok(&["icc", "--ratings", s(&csv), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&printed.stdout).contains("icc_a1"));

    let rows = icc_rows(&out);
    assert_eq!(rows.len(), 1);
    let get = |k: &str| rows[0][k].as_f64().unwrap();
    assert!((get("icc_c1") - 1.0).abs() < 1e-12);
    assert!((get("icc_a1") - 2.0 / 3.0).abs() < 1e-12);
    assert!((get("icc_ak") - 0.8).abs() < 1e-12);
}

#[test]
fn identical_raters_agree_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("r.csv");
    let mut text = String::from("clip_id,segment_index,rater_id,value\n");
    for (seg, v) in [1, 3, 5, 2, 4].iter().enumerate() {
        for rater in ["a", "b", "c"] {
            text.push_str(&format!("c,{seg},{rater},{v}\n"));
        }
    }
    std::fs::write(&csv, text).unwrap();
    let out = tmp.path().join("icc");
    ok(&["icc", "--ratings", s(&csv), "--normalized", "--out", s(&out)]);
    for row in icc_rows(&out) {
        for k in ["icc_c1", "icc_a1", "icc_ak"] {
            assert!((row[k].as_f64().unwrap() - 1.0).abs() < 1e-12, "{row}");
        }
    }
}

#[test]
fn malformed_ratings_report_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bad.csv");
    std::fs::write(&csv, "clip_id,segment_index,rater_id,value\nc,0,a,3\nc,1,a,three\n").unwrap();
    let out = readiness(&["icc", "--ratings", s(&csv), "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv:3"), "{err}");
}

#[test]
fn zero_clips_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = readiness(&["gen", "--clips", "0", "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--clips"));
}

#[test]
fn unknown_stream_is_rejected() {
    let out = readiness(&["train", "--streams", "gaze,ears"]);
    assert!(!out.status.success());
}

#[test]
fn train_then_eval_writes_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    let eval = tmp.path().join("eval");
    ok(&["gen", "--clips", "4", "--seed", "1", "--out", s(&data)]);
    ok(&[
        "train", "--data", s(&data), "--model", "simple", "--streams", "gaze,hand", "--epochs", "1",
        "--stride", "60", "--eval-stride", "60", "--seed", "1", "--out", s(&run),
    ]);
    assert!(run.join("checkpoint.json").exists());
    let log = std::fs::read_to_string(run.join("training_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);

    let printed = ok(&["eval", "--data", s(&data), "--checkpoint", s(&run.join("checkpoint.json")), "--out", s(&eval)]);
    assert!(String::from_utf8_lossy(&printed.stdout).to_lowercase().contains("mae"));
    let mut metrics = csv::Reader::from_path(eval.join("metrics.csv")).unwrap();
    let col = metrics.headers().unwrap().iter().position(|h| h == "mae").unwrap();
    let row = metrics.records().next().unwrap().unwrap();
    let mae: f64 = row[col].parse().unwrap();
    assert!((0.0..=4.0).contains(&mae));
    assert!(eval.join("predictions.csv").exists());
}

#[test]
fn manifest_records_the_command() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("data");
    ok(&["gen", "--clips", "3", "--seed", "9", "--out", s(&out)]);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "gen");
    assert_eq!(m["seed"], 9);
    assert!(m["outputs"].as_array().unwrap().iter().any(|o| o == "features.jsonl"));
}
