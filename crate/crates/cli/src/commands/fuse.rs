use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use kgx_core::fusion::{fuse_all, read_predictions_jsonl, write_fusion_csv, FusionError, Source};

use super::require;
use super::train::KdOutput;
use crate::config::{FusionSplit, PipelineConfig};
use crate::manifest::Run;
use crate::Invalid;

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// External deep-model predictions (JSONL: image_id, label, confidence).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// `kd_outputs.jsonl` from an extract-train-eval run.
    #[arg(long)]
    pub kd_outputs: Option<PathBuf>,
}

impl FuseArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(p) = &self.predictions {
            cfg.paths.predictions = Some(p.clone());
        }
        if let Some(p) = &self.kd_outputs {
            cfg.paths.kd_outputs = Some(p.clone());
        }
    }
}

#[derive(Debug, Serialize)]
struct FusionSummary {
    n: usize,
    deep_accuracy: f64,
    knowledge_accuracy: f64,
    fused_accuracy: f64,
    from_deep: usize,
    from_knowledge: usize,
}

fn read_kd(path: &Path) -> anyhow::Result<Vec<KdOutput>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| FusionError::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn run(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("fuse", out, cfg)?;
    if !cfg.fusion.enabled {
        return Err(Invalid("fusion is disabled in the config".into()).into());
    }
    let pred_path = require(&cfg.paths.predictions, "predictions")?;
    let kd_path = require(&cfg.paths.kd_outputs, "kd_outputs")?;
    run.input("predictions", pred_path)?;
    run.input("kd_outputs", kd_path)?;
    let f = std::fs::File::open(pred_path).with_context(|| format!("opening {}", pred_path.display()))?;
    let deep = read_predictions_jsonl(std::io::BufReader::new(f))?;
    let kd = read_kd(kd_path)?;

    // Deep predictions outside the selected split are dropped; ids unknown
    // to the knowledge side are still reported.
    let known: BTreeSet<&str> = kd.iter().map(|k| k.image_id.as_str()).collect();
    let selected: BTreeMap<String, &KdOutput> = kd
        .iter()
        .filter(|k| cfg.fusion.split == FusionSplit::All || k.split == "test")
        .map(|k| (k.image_id.clone(), k))
        .collect();
    let deep: Vec<_> =
        deep.into_iter().filter(|d| selected.contains_key(&d.image_id) || !known.contains(d.image_id.as_str())).collect();
    let knowledge: BTreeMap<String, (usize, Vec<f64>)> =
        selected.iter().map(|(id, k)| (id.clone(), (k.y_kd, k.proba.clone()))).collect();
    let decisions = fuse_all(&deep, &knowledge)?;

    let n = decisions.len();
    let acc = |hits: usize| if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    let label = |id: &str| selected[id].label;
    let summary = FusionSummary {
        n,
        deep_accuracy: acc(decisions.iter().filter(|d| d.y_dl == label(&d.image_id)).count()),
        knowledge_accuracy: acc(decisions.iter().filter(|d| d.y_kd == label(&d.image_id)).count()),
        fused_accuracy: acc(decisions.iter().filter(|d| d.y_final == label(&d.image_id)).count()),
        from_deep: decisions.iter().filter(|d| d.source == Source::Deep).count(),
        from_knowledge: decisions.iter().filter(|d| d.source == Source::Knowledge).count(),
    };
    write_fusion_csv(&run.path("fusion.csv"), &decisions)?;
    run.artifact("fusion.csv");
    run.write_json("fusion_summary.json", &summary)?;
    log::info!(
        "deep {:.4} knowledge {:.4} fused {:.4} on {n} images",
        summary.deep_accuracy,
        summary.knowledge_accuracy,
        summary.fused_accuracy
    );
    run.finish()?;
    Ok(())
}
