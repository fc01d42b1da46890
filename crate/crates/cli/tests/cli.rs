use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn infiris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infiris"))
        .args(args)
        .env_remove("INFIRIS_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = infiris(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(infiris(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(infiris(&["eval", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(infiris(&["segment", "--manifest", "m.json", "--mode", "adult"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1_with_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = infiris(&["eval", "--scores", "/definitely/missing.csv", "--out", &s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    let line: Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(line["error"], "matching");
    assert!(line["message"].as_str().unwrap().contains("missing.csv"));
}

#[test]
fn eval_four_score_case() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("scores.csv");
    std::fs::write(
        &csv,
        "pair_id,subject_a,sample_a,subject_b,sample_b,kind,score,ftm,best_shift\n\
         0,a,a0,a,a1,genuine,0.1,0,0\n\
         1,b,b0,b,b1,genuine,0.3,0,0\n\
         2,a,a0,b,b0,impostor,0.2,0,0\n\
         3,a,a1,b,b1,impostor,0.4,0,0\n",
    )
    .unwrap();
    let out = dir.path().join("eval");
    ok(&["eval", "--scores", &s(&csv), "--out", &s(&out)]);
    let report = json(&out.join("report.json"));
    assert!((report["eer"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert!((report["auc"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(report["version"], 1);
    assert_eq!(report["ftm_rate"], 0.0);
    let roc = std::fs::read_to_string(out.join("roc.csv")).unwrap();
    assert!(roc.starts_with("threshold,fmr,fnmr\n"));
    let hist = std::fs::read_to_string(out.join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 51);
}

#[test]
fn config_from_environment_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"matching": {"max_shfit": 3}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_infiris"))
        .args(["synth", "--subjects", "1", "--samples", "1", "--out", &s(&dir.path().join("o"))])
        .env("INFIRIS_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let line: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(line["error"], "config");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"corpus": {"n_subjects": 5, "samples_per_subject": 1}, "matching": {"max_shift": 4}}"#)
        .unwrap();
    let out = dir.path().join("o");
    ok(&["synth", "--config", &s(&cfg), "--subjects", "2", "--seed", "99", "--out", &s(&out)]);
    let echoed = json(&out.join("config.json"));
    assert_eq!(echoed["corpus"]["n_subjects"], 2);
    assert_eq!(echoed["corpus"]["base_seed"], 99);
    assert_eq!(echoed["matching"]["max_shift"], 4);
    assert_eq!(json(&out.join("manifest.json"))["entries"].as_array().unwrap().len(), 2);
}

#[test]
fn small_pipeline_report_has_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&[
        "pipeline", "--subjects", "3", "--samples", "3", "--polarity", "dark_pupil", "--mode", "infant",
        "--encoder", "gabor2d", "--seed", "5", "--out", &s(&out),
    ]);
    let report = json(&out.join("report.json"));
    for key in ["eer", "auc", "dprime", "ftm_rate"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["genuine_count"].as_u64().unwrap() + report["ftm_genuine"].as_u64().unwrap(), 9);
    assert_eq!(report["config"]["encoder"]["kind"], "gabor2d");
    assert_eq!(json(&out.join("failures.json")), Value::Array(vec![]));
}

#[test]
fn curated_manifest_resolves_from_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&["synth", "--subjects", "1", "--samples", "2", "--out", &s(&corpus)]);
    let out = dir.path().join("nested/curated");
    ok(&["curate", "--manifest", &s(&corpus.join("manifest.json")), "--out", &s(&out)]);
    let m = json(&out.join("manifest.json"));
    let entries = m["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    for e in entries {
        let p = e["image_path"].as_str().unwrap();
        assert!(Path::new(p).is_relative(), "{p}");
        assert!(out.join(p).exists(), "{p}");
        assert!(e["quality"]["sharpness"].as_f64().unwrap() >= 10.0);
    }
    // The curated manifest feeds the next stage directly.
    ok(&["quality", "--manifest", &s(&out.join("manifest.json")), "--out", &s(&dir.path().join("q"))]);
}

#[test]
fn nn_mode_without_weights_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&["synth", "--subjects", "1", "--samples", "1", "--out", &s(&corpus)]);
    let out = infiris(&[
        "segment", "--manifest", &s(&corpus.join("manifest.json")), "--mode", "nn", "--out",
        &s(&dir.path().join("seg")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let line: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(line["error"], "config");
}

#[test]
fn encode_match_leakfilter_chain() {
    let dir = tempfile::tempdir().unwrap();
    let p = |x: &str| s(&dir.path().join(x));
    ok(&["synth", "--subjects", "2", "--samples", "2", "--out", &p("corpus")]);
    ok(&["encode", "--manifest", &p("corpus/manifest.json"), "--out", &p("enc")]);
    let index = json(&dir.path().join("enc/codes.json"));
    assert_eq!(index["encoder"], "loggabor1d");
    assert!(index["entries"].as_array().unwrap().iter().all(|e| e["code_path"].is_string()));
    ok(&["match", "--codes", &p("enc/codes.json"), "--out", &p("match")]);
    let table = std::fs::read_to_string(dir.path().join("match/scores.csv")).unwrap();
    // 4 samples: 6 pairs plus the header.
    assert_eq!(table.lines().count(), 7);
    ok(&["leakfilter", "--synthetic", &p("enc/codes.json"), "--authentic", &p("enc/codes.json"), "--out", &p("leak")]);
    let leak = json(&dir.path().join("leak/leakfilter.json"));
    assert_eq!(leak["retained"], Value::Array(vec![]));
    assert_eq!(leak["removed"].as_array().unwrap().len(), 4);
}
