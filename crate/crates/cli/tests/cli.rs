use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn utd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_utd")).args(args).current_dir(dir).output().expect("spawn utd")
}

fn write_classification(dir: &Path) {
    let manifest = r#"{
  "name": "tiny",
  "task": "classification",
  "classes": ["archery", "bowling"],
  "videos": [
    {"id": "a", "frames": ["a0.png", "a1.png"], "label_index": 0, "split": "train"},
    {"id": "b", "frames": ["b0.png", "b1.png"], "label_index": 1, "split": "train"},
    {"id": "c", "frames": ["c0.png", "c1.png"], "label_index": 0, "split": "test"},
    {"id": "d", "frames": ["d0.png", "d1.png"], "label_index": 1, "split": "test"}
  ]
}"#;
    fs::write(dir.join("m.json"), manifest).unwrap();
    let mut videos = serde_json::Map::new();
    for (id, word) in [("a", "bow"), ("b", "pins"), ("c", "bow"), ("d", "lane")] {
        let list = |w: &str| serde_json::json!([[w, "table"], [w]]);
        videos.insert(
            id.into(),
            serde_json::json!({
                "objects": list(word),
                "activities": list("moving"),
                "verbs": list("move"),
                "obj_comp_act": [format!("a {word} on a table"), format!("a {word}")],
                "obj_comp_act_15w": [format!("{word} on table"), word],
            }),
        );
    }
    fs::write(dir.join("d.json"), Value::Object(videos).to_string()).unwrap();
}

#[test]
fn validate_complete_inputs_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    write_classification(dir.path());
    let out = utd(dir.path(), &["validate", "--manifest", "m.json", "--descriptions", "d.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("objects: 4/4 videos complete"));
}

#[test]
fn validate_reports_missing_entries_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    write_classification(dir.path());
    fs::write(dir.path().join("short.json"), r#"{"a": {"objects": [["bow"], null]}}"#).unwrap();
    let out = utd(dir.path(), &["validate", "--manifest", "m.json", "--descriptions", "short.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(utd(dir.path(), &["frobnicate"]).status.code(), Some(2));
    let out = utd(dir.path(), &["split", "--manifest", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_manifest_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = utd(dir.path(), &["validate", "--manifest", "nope.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn split_without_seeds_records_the_defaults() {
    let dir = tempfile::tempdir().unwrap();
    write_classification(dir.path());
    let out =
        utd(dir.path(), &["--stub", "split", "--manifest", "m.json", "--descriptions", "d.json", "--out", "s.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let split: Value = serde_json::from_slice(&fs::read(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(split["panel"]["seeds"], serde_json::json!([0, 1, 2]));
    assert_eq!(split["panel"]["mode"], "dataset_bias");
    let prov: Value = serde_json::from_slice(&fs::read(dir.path().join("s.provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["seeds"], serde_json::json!([0, 1, 2]));
    assert_eq!(prov["models"]["embed"], "stub-bow-256");
    for name in ["s.verdicts.json", "s.stats.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn seeds_from_flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    write_classification(dir.path());
    fs::write(dir.path().join("utd.toml"), "seeds = [7, 8, 9]\n").unwrap();
    let base = ["--stub", "--config", "utd.toml", "split", "--manifest", "m.json", "--descriptions", "d.json"];
    let out = utd(dir.path(), &[&base[..], &["--out", "cfg.json"]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = utd(dir.path(), &[&base[..], &["--out", "flag.json", "--seeds", "3,4,5"]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let seeds = |f: &str| {
        let v: Value = serde_json::from_slice(&fs::read(dir.path().join(f)).unwrap()).unwrap();
        v["panel"]["seeds"].clone()
    };
    assert_eq!(seeds("cfg.json"), serde_json::json!([7, 8, 9]));
    assert_eq!(seeds("flag.json"), serde_json::json!([3, 4, 5]));
}

#[test]
fn wrong_seed_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_classification(dir.path());
    let out = utd(
        dir.path(),
        &["--stub", "split", "--manifest", "m.json", "--descriptions", "d.json", "--seeds", "1,2", "--out", "s.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("three seeds"));
}

#[test]
fn bias_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    write_classification(dir.path());
    let out = utd(
        dir.path(),
        &["--stub", "bias", "--manifest", "m.json", "--descriptions", "d.json", "--mode", "ds", "--out", "r"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("r/bias_report.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("concept,temporal,metric,delta"));
    assert_eq!(csv.lines().count(), 17);
    for name in ["bias_report.json", "bias_report.md", "provenance.json"] {
        assert!(dir.path().join("r").join(name).exists(), "{name} missing");
    }
}

#[test]
fn kappa_reads_saved_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    write_classification(dir.path());
    let out =
        utd(dir.path(), &["--stub", "split", "--manifest", "m.json", "--descriptions", "d.json", "--out", "s.json"]);
    assert!(out.status.success());
    let out = utd(dir.path(), &["kappa", "--verdicts", "s.verdicts.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    let stats: Value = serde_json::from_slice(&fs::read(dir.path().join("s.stats.json")).unwrap()).unwrap();
    assert_eq!(printed, stats["kappa"].as_f64().unwrap());
}

#[test]
fn benchmark_rejects_incomplete_predictions() {
    let dir = tempfile::tempdir().unwrap();
    write_classification(dir.path());
    let out =
        utd(dir.path(), &["--stub", "split", "--manifest", "m.json", "--descriptions", "d.json", "--out", "s.json"]);
    assert!(out.status.success());
    fs::write(dir.path().join("m1.jsonl"), "{\"id\":\"c\",\"pred\":0}\n").unwrap();
    let out = utd(
        dir.path(),
        &["benchmark", "--preds", "m1.jsonl", "--manifest", "m.json", "--splits", "s.json", "--out", "b.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains('d'));
    fs::write(dir.path().join("m1.jsonl"), "{\"id\":\"c\",\"pred\":0}\n{\"id\":\"d\",\"pred\":0}\n").unwrap();
    let out = utd(
        dir.path(),
        &["benchmark", "--preds", "m1.jsonl", "--manifest", "m.json", "--splits", "s.json", "--out", "b.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert!(csv.starts_with("model,split,full,split_metric,delta\nm1,s,50,"), "{csv}");
}
