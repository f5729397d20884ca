#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use kgx_core::assets;
use kgx_core::rules::load_rulebase;

use common::fake_llm::{completion, FakeLlm};

fn kgx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgx")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) {
    let out = kgx(args);
    assert!(out.status.success(), "kgx {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(args: &[&str]) -> i32 {
    kgx(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// A small shared dataset and training run.
fn fixture() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        ok(&["gen-data", "--n", "30", "--size", "256", "--seed", "3", "--out", s(&d.join("data"))]);
        ok(&["extract-train-eval", "--dataset", s(&d.join("data")), "--out", s(&d.join("train"))]);
        dir
    })
    .path()
}

#[test]
fn gen_data_writes_images_sidecars_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&["gen-data", "--n", "5", "--size", "256", "--out", s(&out)]);
    let count = |sub: &str, ext: &str| {
        std::fs::read_dir(out.join(sub)).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == ext).count()
    };
    assert_eq!(count("images", "png"), 5);
    assert_eq!(count("truth", "json"), 5);
    for f in ["labels.csv", "demographics.csv", "dataset.json", "run_manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(out.join("labels.csv")).unwrap().lines().count(), 6);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&["tune", "--bogus"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--help"]), 0);

    let bad = d.join("bad.json");
    std::fs::write(&bad, r#"{"seeed": 1}"#).unwrap();
    assert_eq!(code(&["gen-data", "--config", s(&bad), "--out", s(&d.join("x"))]), 1);

    // tuning without ground truth is a validation error
    let data = d.join("data");
    ok(&["gen-data", "--n", "4", "--size", "128", "--out", s(&data)]);
    std::fs::remove_dir_all(data.join("truth")).unwrap();
    assert_eq!(code(&["tune", "--dataset", s(&data), "--out", s(&d.join("t"))]), 1);

    let empty = d.join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(code(&["build-rules", "--corpus", s(&empty), "--out", s(&d.join("r"))]), 1);

    // unreadable input is a runtime failure
    assert_eq!(code(&["fuse", "--predictions", s(&d.join("nope.jsonl")), "--kd-outputs", s(&d.join("nope2.jsonl")), "--out", s(&d.join("f"))]), 2);
}

#[test]
fn supervised_tune_finds_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    ok(&["gen-data", "--n", "40", "--size", "256", "--mix", "0,0,0,0.5,0.5", "--seed", "7", "--out", s(&data)]);
    let cfg = d.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"tune": {"q": {"epsilon_decay_episodes": 500}, "noise": {"score_model": {"kind": "split", "true_lo": 0.55, "true_hi": 1.0, "spur_lo": 0.0, "spur_hi": 0.55}}}}"#,
    )
    .unwrap();
    let out = d.join("tune");
    ok(&["tune", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&out)]);
    let t = json(&out.join("bindings.json"))["confidence_threshold"].as_f64().unwrap();
    assert!((t - 0.55).abs() <= 0.05 + 1e-9, "threshold {t}");
    for f in ["episodes.csv", "sweep.csv", "q_table.json", "detections.jsonl", "tune_summary.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn verify_policies() {
    let root = fixture();
    let dir = tempfile::tempdir().unwrap();
    let data = root.join("data");
    let degraded = dir.path().join("degraded.json");
    std::fs::write(&degraded, assets::DEGRADED_EXUDATE_PLAN).unwrap();
    let mono = dir.path().join("mono");
    ok(&["verify", "--dataset", s(&data), "--plan", s(&degraded), "--k", "4", "--out", s(&mono)]);
    let r = json(&mono.join("verification_report.json"));
    assert!(r["plan_versions"].as_array().unwrap().len() <= 5);
    assert!(mono.join("final_plan.json").is_file() && mono.join("transcript.jsonl").is_file());

    let ident = dir.path().join("ident");
    ok(&["verify", "--dataset", s(&data), "--plan", s(&degraded), "--k", "4", "--mock-policy", "identity", "--out", s(&ident)]);
    let r = json(&ident.join("verification_report.json"));
    if r["passed"] == false {
        assert_eq!(r["stop_reason"], "budget_exhausted");
        assert_eq!(r["plan_versions"].as_array().unwrap().len(), 5);
    }
}

fn write_predictions(path: &Path, kd: &Path, confidence: f64, skip: usize) {
    let mut text = String::new();
    for (i, line) in std::fs::read_to_string(kd).unwrap().lines().enumerate().skip(skip) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let y = (v["label"].as_u64().unwrap() + i as u64 % 2) % 5;
        text.push_str(&format!("{{\"image_id\": {}, \"label\": {y}, \"confidence\": {confidence}}}\n", v["image_id"]));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn fuse_extremes_and_missing_ids() {
    let root = fixture();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let kd = root.join("train/kd_outputs.jsonl");
    let summary = |conf: f64, name: &str| {
        let preds = d.join(format!("{name}.jsonl"));
        write_predictions(&preds, &kd, conf, 0);
        let out = d.join(name);
        ok(&["fuse", "--predictions", s(&preds), "--kd-outputs", s(&kd), "--out", s(&out)]);
        json(&out.join("fusion_summary.json"))
    };
    let deep = summary(1.0, "deep");
    assert_eq!(deep["fused_accuracy"], deep["deep_accuracy"]);
    assert_eq!(deep["from_knowledge"], 0);
    let know = summary(0.0, "know");
    assert_eq!(know["fused_accuracy"], know["knowledge_accuracy"]);
    assert_eq!(know["from_deep"], 0);

    let partial = d.join("partial.jsonl");
    write_predictions(&partial, &kd, 0.5, 0);
    let mut text = std::fs::read_to_string(&partial).unwrap();
    text.push_str("{\"image_id\": \"stranger\", \"label\": 0, \"confidence\": 0.5}\n");
    std::fs::write(&partial, text).unwrap();
    assert_eq!(code(&["fuse", "--predictions", s(&partial), "--kd-outputs", s(&kd), "--out", s(&d.join("p"))]), 1);
}

#[test]
fn report_summarizes_runs() {
    let root = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    ok(&["report", s(&root.join("train")), s(&root.join("data")), "--out", s(&out)]);
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("extract-train-eval") && md.contains("test acc"));
    assert_eq!(json(&out.join("report.json")).as_array().unwrap().len(), 2);
    assert_eq!(code(&["report", "--out", s(&dir.path().join("r2"))]), 1);
}

#[test]
fn remote_build_rules_persists_and_replays_transcript() {
    let rb = load_rulebase(assets::DR_RULEBASE).unwrap();
    let mut replies = vec![(200, completion("{\"rules\": oops")), (200, completion(assets::DR_RULEBASE))];
    for rule in rb.visual() {
        replies.push((200, completion(assets::reference_plan(&rule.rule_id).unwrap())));
    }
    let n = replies.len();
    let server = FakeLlm::start(replies);
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("remote.json");
    std::fs::write(&cfg, format!(r#"{{"bridge": {{"endpoint_url": "{}"}}}}"#, server.url)).unwrap();
    let out = d.join("remote");
    ok(&["build-rules", "--backend", "remote", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(server.join().len(), n);
    let transcript = std::fs::read_to_string(out.join("transcript.jsonl")).unwrap();
    assert_eq!(transcript.lines().count(), n);
    assert!(transcript.lines().next().unwrap().contains("rejected"));

    let replay = d.join("replay");
    ok(&["build-rules", "--config", s(&out.join("run_manifest.json")), "--out", s(&replay)]);
    let files = |p: &PathBuf| std::fs::read_to_string(p).unwrap();
    assert_eq!(files(&out.join("rulebase.json")), files(&replay.join("rulebase.json")));
    for rule in rb.visual() {
        let rel = format!("plans/{}.json", rule.rule_id);
        assert_eq!(files(&out.join(&rel)), files(&replay.join(&rel)));
    }
}
