//! The command line end to end, in scratch directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use trendcpd::cli::main_with_args;
use trendcpd::io::{parse_detections, parse_metrics};

const DEMO: &str = include_str!("../configs/demo.toml");

fn demo_in(dir: &Path) -> PathBuf {
    let text = DEMO.replace("output_dir = \"../out/demo\"", "output_dir = \"out\"");
    let path = dir.join("demo.toml");
    fs::write(&path, text).unwrap();
    path
}

fn cmd(args: &[&str], config: &Path) -> i32 {
    let mut all = vec!["trendcpd".to_string()];
    all.extend(args.iter().map(|s| s.to_string()));
    all.push("-c".into());
    all.push(config.display().to_string());
    main_with_args(all)
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn demo_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_in(dir.path());
    for c in ["simulate", "standardize", "detect", "eval", "grid", "report", "plot"] {
        assert_eq!(cmd(&[c], &cfg), 0, "{c}");
    }
    let out = dir.path().join("out");
    for f in [
        "datasets/wear-1.csv",
        "standardized/wear-3.csv",
        "detections.csv",
        "detect_metrics.csv",
        "grid_detections.csv",
        "metrics.csv",
        "report.md",
        "selection.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let metrics = parse_metrics(&fs::read_to_string(out.join("metrics.csv")).unwrap()).unwrap();
    // 5 + 5 + 5 + 5 + 6 grid points on 3 datasets
    assert_eq!(metrics.len(), 78);
    assert!(metrics.iter().all(|r| r.error.is_none()));
    let dets = parse_detections(&fs::read_to_string(out.join("detections.csv")).unwrap()).unwrap();
    assert!(dets.iter().any(|(id, d)| id == "wear-1" && d.detector_id == "pnc-ar"));
    let report = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("wear-2") && report.contains("random"), "{report}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_in(dir.path());
    let out = dir.path().join("out");
    let mut runs = Vec::new();
    for _ in 0..2 {
        for c in ["simulate", "standardize", "grid", "report", "plot"] {
            assert_eq!(cmd(&[c], &cfg), 0, "{c}");
        }
        runs.push(snapshot(&out));
        fs::remove_dir_all(&out).unwrap();
    }
    assert_eq!(runs[0].keys().collect::<Vec<_>>(), runs[1].keys().collect::<Vec<_>>());
    for (k, v) in &runs[0] {
        assert!(&runs[1][k] == v, "{} differs", k.display());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(main_with_args(["trendcpd", "bogus"]), 1);
    assert_eq!(main_with_args(["trendcpd", "grid"]), 1);
    assert_eq!(cmd(&["grid"], &dir.path().join("missing.toml")), 2);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, DEMO.replace("schema_version = 1", "schema_version = 7")).unwrap();
    assert_eq!(cmd(&["simulate"], &bad), 2);

    let cfg = demo_in(dir.path());
    assert_eq!(cmd(&["report"], &cfg), 2, "report without metrics");
}

#[test]
fn lstm_model_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lstm.toml");
    fs::write(
        &cfg,
        r#"
schema_version = 1
seed = 3
output_dir = "out"

[[datasets]]
id = "s"
[datasets.simulate]
kind = "step"
n = 400
pre = 0.0
post = 3.0
sigma = 1.0
cp = 301

[train_lstm]
dataset = "s"
nh = 10
nz = 5
train_len = 250
output = "model.txt"
[train_lstm.train]
epochs = 3
hidden = 4

[[detectors]]
id = "pnc-lstm"
[detectors.params]
method = "pnc"
predictor = { kind = "lstm", model = "out/model.txt" }
l = 10
b = 5
desInt = 5.0
"#,
    )
    .unwrap();
    assert_eq!(cmd(&["detect"], &cfg), 2, "model not trained yet");
    assert_eq!(cmd(&["train-lstm"], &cfg), 0);
    let first = fs::read(dir.path().join("out/model.txt")).unwrap();
    assert_eq!(cmd(&["train-lstm"], &cfg), 0);
    assert_eq!(fs::read(dir.path().join("out/model.txt")).unwrap(), first);
    assert_eq!(cmd(&["detect"], &cfg), 0);
    let dets = parse_detections(&fs::read_to_string(dir.path().join("out/detections.csv")).unwrap()).unwrap();
    assert!(dets.iter().any(|(_, d)| d.located_time >= 300));
}

#[test]
fn seed_override_changes_simulated_data() {
    let dir = tempfile::tempdir().unwrap();
    let base = trendcpd::config::ExperimentConfig::parse(DEMO, dir.path(), None).unwrap();
    let other = trendcpd::config::ExperimentConfig::parse(DEMO, dir.path(), Some(1)).unwrap();
    let a = base.raw_dataset(0).unwrap();
    let b = other.raw_dataset(0).unwrap();
    assert_ne!(a.values(), b.values());
    assert_eq!(a.cp_labels(), b.cp_labels());
}
