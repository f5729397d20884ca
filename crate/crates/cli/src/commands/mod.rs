pub mod data;
pub mod fuse;
pub mod report;
pub mod rules;
pub mod train;
pub mod tune;
pub mod verify;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;

use kgx_core::assets;
use kgx_core::llm::{backend_from_config, BackendKind, ChatBackend, LlmBridge, MockBackend, RefinePolicy};
use kgx_core::plan::{parse_plan, ExtractionPlan};
use kgx_core::rules::{load_rulebase, load_rulebase_file, RuleBase};

use crate::config::PipelineConfig;
use crate::manifest::Run;
use crate::Invalid;

/// A seeded permutation of `0..n`.
pub fn seeded_order(n: usize, seed: u64, salt: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by_key(|&i| (kgx_core::rng::derive(seed, salt, i as u64), i));
    idx
}

pub fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> anyhow::Result<&'a Path> {
    path.as_deref().ok_or_else(|| Invalid(format!("no {what} given (flag or paths.{what} in the config)")).into())
}

/// Configured rule base, else the bundled DR one.
pub fn rulebase(cfg: &PipelineConfig, run: &mut Run) -> anyhow::Result<RuleBase> {
    match &cfg.paths.rulebase {
        Some(p) => {
            run.input("rulebase", p)?;
            Ok(load_rulebase_file(p).with_context(|| format!("loading rule base {}", p.display()))?)
        }
        None => Ok(load_rulebase(assets::DR_RULEBASE)?),
    }
}

pub fn read_plan(path: &Path) -> anyhow::Result<ExtractionPlan> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading plan {}", path.display()))?;
    Ok(parse_plan(&text).with_context(|| format!("parsing plan {}", path.display()))?)
}

/// `paths.plan` if set, else the bundled reference plan for `rule_id`.
pub fn single_plan(cfg: &PipelineConfig, run: &mut Run, rule_id: &str) -> anyhow::Result<ExtractionPlan> {
    match &cfg.paths.plan {
        Some(p) => {
            run.input("plan", p)?;
            read_plan(p)
        }
        None => {
            let text = assets::reference_plan(rule_id).ok_or_else(|| Invalid(format!("no bundled plan for `{rule_id}`")))?;
            Ok(parse_plan(text)?)
        }
    }
}

pub fn bindings(cfg: &PipelineConfig, run: &mut Run) -> anyhow::Result<BTreeMap<String, f64>> {
    match &cfg.paths.bindings {
        Some(p) => {
            run.input("bindings", p)?;
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", p.display())))?)
        }
        None => Ok(BTreeMap::new()),
    }
}

pub fn dataset(cfg: &PipelineConfig, run: &mut Run) -> anyhow::Result<PathBuf> {
    let dir = require(&cfg.paths.dataset, "dataset")?.to_path_buf();
    run.input("dataset", &dir)?;
    Ok(dir)
}

/// Bridge over the configured backend; the mock answers refinement
/// requests with `policy`.
pub fn bridge(cfg: &PipelineConfig, policy: RefinePolicy) -> anyhow::Result<LlmBridge> {
    let backend: Box<dyn ChatBackend> = match cfg.bridge.backend {
        BackendKind::Mock => Box::new(MockBackend::dr(cfg.bridge.seed).with_policy(policy)),
        _ => backend_from_config(&cfg.bridge)?,
    };
    Ok(LlmBridge::new(backend, cfg.bridge.clone())?)
}

pub fn write_transcript(run: &mut Run, bridge: &LlmBridge) -> anyhow::Result<()> {
    run.write("transcript.jsonl", bridge.transcript_jsonl())
}
