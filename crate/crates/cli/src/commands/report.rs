use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Serialize;
use serde_json::Value;

use crate::config::PipelineConfig;
use crate::manifest::{Run, RunManifest, MANIFEST_FILE};
use crate::Invalid;

/// Files summarized when a run directory has them.
const KNOWN: [&str; 6] =
    ["metrics.json", "localization.json", "fusion_summary.json", "tune_summary.json", "bindings.json", "verification_report.json"];

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories to summarize.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunEntry {
    dir: String,
    command: String,
    run_id: String,
    seed: u64,
    results: serde_json::Map<String, Value>,
}

fn verify_digest(v: &Value) -> Value {
    serde_json::json!({
        "passed": v["passed"],
        "stop_reason": v["stop_reason"],
        "iterations": v["plan_versions"].as_array().map_or(0, Vec::len),
        "mean_scores": v["plan_versions"].as_array().map(|a| a.iter().map(|p| p["mean_score"].clone()).collect::<Vec<_>>()),
    })
}

fn markdown(entries: &[RunEntry]) -> String {
    let mut md = String::from("# kgx report\n");
    for e in entries {
        let _ = write!(md, "\n## {} ({})\n\nrun `{}`, seed {}\n", e.command, e.dir, e.run_id, e.seed);
        if let Some(m) = e.results.get("metrics.json") {
            md.push_str("\n| model | val acc | test acc | precision (macro) | recall (macro) | F1 (macro) |\n");
            md.push_str("|---|---|---|---|---|---|\n");
            let f = |k: &str| m[k].as_f64().map_or("-".into(), |v| format!("{:.2}%", v * 100.0));
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                m["model"].as_str().unwrap_or("?"),
                f("val_accuracy"),
                f("test_accuracy"),
                f("precision_macro"),
                f("recall_macro"),
                f("f1_macro")
            );
        }
        for (name, v) in &e.results {
            if name != "metrics.json" {
                let _ = write!(md, "\n{name}: `{v}`\n");
            }
        }
    }
    md
}

pub fn run(cfg: &PipelineConfig, args: &ReportArgs, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("report", out, cfg)?;
    let mut entries = Vec::new();
    for dir in &args.runs {
        let mpath = dir.join(MANIFEST_FILE);
        if !mpath.is_file() {
            return Err(Invalid(format!("{} has no {MANIFEST_FILE}", dir.display())).into());
        }
        let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(&mpath)?)
            .map_err(|e| Invalid(format!("{}: {e}", mpath.display())))?;
        let mut results = serde_json::Map::new();
        for name in KNOWN {
            let p = dir.join(name);
            if p.is_file() {
                let v: Value = serde_json::from_str(&std::fs::read_to_string(&p)?).with_context(|| format!("parsing {}", p.display()))?;
                let v = if name == "verification_report.json" { verify_digest(&v) } else { v };
                results.insert(name.to_string(), v);
            }
        }
        entries.push(RunEntry {
            dir: dir.display().to_string(),
            command: manifest.command,
            run_id: manifest.run_id,
            seed: manifest.seed,
            results,
        });
    }
    run.write("report.md", markdown(&entries))?;
    run.write_json("report.json", &entries)?;
    run.finish()?;
    Ok(())
}
