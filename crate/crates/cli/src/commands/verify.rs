use std::path::{Path, PathBuf};

use clap::Args;

use kgx_core::plan::serialize_plan;
use kgx_core::synth::{load_images, LesionKind};
use kgx_core::verify::{verify_and_refine, ImageTruth, Regime, VerifyError, VerifyMode};

use super::{bindings, bridge, dataset, rulebase, seeded_order, single_plan, write_transcript};
use crate::config::{MockPolicy, PipelineConfig, TargetSource};
use crate::manifest::Run;
use crate::Invalid;

const SALT_PICK: u64 = 0x7e51;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Validation images drawn from the dataset.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = parse_policy)]
    pub mock_policy: Option<MockPolicy>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<VerifyMode>,
}

fn parse_policy(s: &str) -> Result<MockPolicy, String> {
    match s {
        "monotone" => Ok(MockPolicy::Monotone),
        "identity" => Ok(MockPolicy::Identity),
        _ => Err(format!("unknown policy `{s}` (monotone|identity)")),
    }
}

fn parse_mode(s: &str) -> Result<VerifyMode, String> {
    match s {
        "entropy" => Ok(VerifyMode::Entropy),
        "mean_score" => Ok(VerifyMode::MeanScore),
        _ => Err(format!("unknown mode `{s}` (entropy|mean_score)")),
    }
}

impl VerifyArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(p) = &self.plan {
            cfg.paths.plan = Some(p.clone());
        }
        if let Some(d) = &self.dataset {
            cfg.paths.dataset = Some(d.clone());
        }
        if let Some(k) = self.k {
            cfg.verify.k = k;
        }
        if let Some(p) = self.mock_policy {
            cfg.verify.mock_policy = p;
        }
        if let Some(m) = self.mode {
            cfg.verify.loop_config.mode = m;
        }
    }
}

/// `k` of `n` indices, seeded, in ascending order.
pub fn pick(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx = seeded_order(n, seed, SALT_PICK);
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

pub fn run(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("verify", out, cfg)?;
    let plan = single_plan(cfg, &mut run, "exudates")?;
    let mut loop_config = cfg.verify.loop_config.clone();
    loop_config.bindings.extend(bindings(cfg, &mut run)?);
    let dir = dataset(cfg, &mut run)?;
    let (_, images) = load_images(&dir)?;
    if images.len() < cfg.verify.k {
        return Err(Invalid(format!("dataset has {} images, verify.k is {}", images.len(), cfg.verify.k)).into());
    }
    let chosen: Vec<_> = pick(images.len(), cfg.verify.k, cfg.seed).into_iter().map(|i| &images[i]).collect();
    let kind = LesionKind::from_rule_id(&plan.rule_id);
    let rb = match (loop_config.regime, cfg.verify.targets) {
        (Regime::Unsupervised, TargetSource::Rulebase) => Some(rulebase(cfg, &mut run)?),
        _ => None,
    };
    let mut validation = Vec::with_capacity(chosen.len());
    for im in &chosen {
        let truth = match (&rb, kind) {
            (Some(rb), _) => {
                let n = rb
                    .get(&plan.rule_id)
                    .and_then(|r| r.expected_target(&format!("grade_{}", im.grade)))
                    .ok_or_else(|| Invalid(format!("no expected count for `{}` at grade {}", plan.rule_id, im.grade)))?;
                ImageTruth::count(n)
            }
            (None, Some(kind)) => {
                let boxes = im.truth_boxes(kind).ok_or(VerifyError::MissingGroundTruth("truth sidecars"))?;
                match loop_config.regime {
                    Regime::Supervised => ImageTruth::boxes(boxes),
                    Regime::Unsupervised => ImageTruth::count(boxes.len() as u32),
                }
            }
            (None, None) => return Err(Invalid(format!("no lesion truth for rule `{}`", plan.rule_id)).into()),
        };
        validation.push((&im.image, truth));
    }
    let bridge = bridge(cfg, cfg.verify.mock_policy.into())?;
    let outcome = verify_and_refine(&plan, &validation, &bridge, &loop_config);
    write_transcript(&mut run, &bridge)?;
    let report = outcome?;
    let ids: Vec<&str> = chosen.iter().map(|im| im.id.as_str()).collect();
    run.write_json("validation_ids.json", &ids)?;
    run.write_json("verification_report.json", &report)?;
    run.write("final_plan.json", serialize_plan(&report.final_plan))?;
    log::info!(
        "{} after {} evaluation(s): {:?}",
        if report.passed { "passed" } else { "not passed" },
        report.plan_versions.len(),
        report.stop_reason
    );
    run.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pick_is_seeded_subset() {
        let a = pick(20, 8, 1);
        assert_eq!(a.len(), 8);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, pick(20, 8, 1));
        assert_ne!(a, pick(20, 8, 2));
        assert_eq!(pick(3, 8, 0), vec![0, 1, 2]);
    }
}
