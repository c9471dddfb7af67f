use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sdrfuzz::bigram::save_rpm;
use sdrfuzz::fixtures::historic_rpms;

fn sdrfuzz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdrfuzz"))
        .args(args)
        .env_remove("SDRFUZZ_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_manifest(dir: &Path, normal: &str, abnormal: &str) -> String {
    fs::write(dir.join("normal.txt"), normal).unwrap();
    fs::write(dir.join("abnormal.txt"), abnormal).unwrap();
    let m = dir.join("corpus.json");
    fs::write(&m, r#"{"normal": ["normal.txt"], "abnormal": ["abnormal.txt"], "format": "pipe"}"#).unwrap();
    s(&m).to_owned()
}

fn write_config(dir: &Path, strategies: &str, iterations: usize) -> String {
    let (n, a, v) = historic_rpms("medium_legacy");
    save_rpm(&n, &v, &dir.join("n.json")).unwrap();
    save_rpm(&a, &v, &dir.join("a.json")).unwrap();
    let cfg = serde_json::json!({
        "spec_path": "builtin:medium",
        "strategies": strategies,
        "iterations": iterations,
        "rng_seed": 5,
        "pretrained_rpm_paths": {"normal": "n.json", "abnormal": "a.json"},
    });
    let p = dir.join("campaign.json");
    fs::write(&p, cfg.to_string()).unwrap();
    s(&p).to_owned()
}

#[test]
fn train_both_labels_then_combine_and_entropy() {
    let d = tempfile::tempdir().unwrap();
    let m = write_manifest(d.path(), "open|read|close\nopen|write|close\n", "open|close|read\n");
    let (n, a, c) = (d.path().join("n.json"), d.path().join("a.json"), d.path().join("c.json"));
    let o = sdrfuzz(&["train", "--corpus", &m, "--label", "both", "--out", s(&n), "--out", s(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(n.exists() && a.exists());

    let o = sdrfuzz(&["combine", "--normal", s(&n), "--abnormal", s(&a), "--ratio", "2:1", "--out", s(&c)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = sdrfuzz(&["entropy", "--rpm", s(&c)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().count() >= 2, "{text}");
}

#[test]
fn both_labels_need_two_outputs() {
    let d = tempfile::tempdir().unwrap();
    let m = write_manifest(d.path(), "open|close\n", "close|open\n");
    let o = sdrfuzz(&["train", "--corpus", &m, "--out", s(&d.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn empty_label_warns_and_writes_zero_matrix() {
    let d = tempfile::tempdir().unwrap();
    let m = write_manifest(d.path(), "open|close\n", "");
    let out = d.path().join("a.json");
    let o = sdrfuzz(&["train", "--corpus", &m, "--label", "abnormal", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    assert!(out.exists());
}

#[test]
fn malformed_trace_is_a_user_error() {
    let d = tempfile::tempdir().unwrap();
    let m = write_manifest(d.path(), "open||close\n", "");
    let o = sdrfuzz(&["train", "--corpus", &m, "--label", "normal", "--out", s(&d.path().join("n.json"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generate_is_deterministic_per_seed() {
    for mode in ["uni", "walk"] {
        let args = ["generate", "--spec", "builtin:medium", "--mode", mode, "--count", "5", "--length", "6", "--seed", "9"];
        let a = sdrfuzz(&args);
        let b = sdrfuzz(&args);
        assert!(a.status.success(), "{}", stderr(&a));
        assert_eq!(a.stdout, b.stdout);
        let text = stdout(&a);
        let lines: std::collections::BTreeSet<&str> = text.lines().collect();
        assert_eq!(text.lines().count(), 5);
        assert!(lines.len() >= 2, "{text}");
        assert!(text.lines().all(|l| l.split('|').count() == 6));
    }
}

#[test]
fn seed_env_overrides_flag() {
    let run = |env: Option<&str>, seed: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_sdrfuzz"));
        c.args(["generate", "--spec", "builtin:tiny", "--count", "4", "--seed", seed]);
        match env {
            Some(v) => c.env("SDRFUZZ_SEED", v),
            None => c.env_remove("SDRFUZZ_SEED"),
        };
        c.output().unwrap()
    };
    assert_eq!(run(Some("3"), "1").stdout, run(None, "3").stdout);
    assert_eq!(run(Some("x"), "1").status.code(), Some(1));
}

#[test]
fn unknown_start_call_is_rejected() {
    let o = sdrfuzz(&["generate", "--spec", "builtin:tiny", "--start", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn fuzz_writes_report_and_report_reads_it() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "CRD", 600);
    let out = d.path().join("report");
    let o = sdrfuzz(&["fuzz", "--config", &cfg, "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["metrics.csv", "entropy.csv", "crashes.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let o = sdrfuzz(&["report", "--dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("CRD"));

    let path = out.join("summary.json");
    let mut summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let b = summary["cumulative_branches"].as_u64().unwrap();
    summary["cumulative_branches"] = (b + 1).into();
    fs::write(&path, summary.to_string()).unwrap();
    let o = sdrfuzz(&["report", "--dir", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_spec_names_the_path() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("campaign.json");
    fs::write(&p, r#"{"spec_path": "nowhere.json", "strategies": "R", "iterations": 10, "rng_seed": 1}"#).unwrap();
    let o = sdrfuzz(&["fuzz", "--config", s(&p), "--out", s(&d.path().join("r"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.json"), "{}", stderr(&o));
}

#[test]
fn dongting_without_models_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("campaign.json");
    fs::write(&p, r#"{"spec_path": "builtin:tiny", "strategies": "D", "iterations": 10, "rng_seed": 1}"#).unwrap();
    let o = sdrfuzz(&["fuzz", "--config", s(&p), "--out", s(&d.path().join("r"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ratio_study_prints_one_row_per_ratio() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "D", 300);
    let o = sdrfuzz(&["ratio-study", "--config", &cfg, "--ratios", "1:1,3:1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.lines().nth(2).unwrap().starts_with("3:1"));
}
