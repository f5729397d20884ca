use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use kgx_core::rl::{
    greedy_param, read_scored_jsonl, sweep, train_agent, write_scored_jsonl, Environment, QTable, SupervisedEnv,
    UnsupervisedEnv,
};
use kgx_core::synth::{load_dataset, load_images, scored_synthetic_detections, DatasetImage, DatasetManifest, LesionKind};
use kgx_core::verify::{Regime, VerifyError};

use super::{dataset, rulebase, single_plan};
use crate::config::{PipelineConfig, TargetSource};
use crate::manifest::Run;
use crate::Invalid;

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_parser = parse_regime)]
    pub regime: Option<Regime>,
    /// Scored detections (JSONL) for the supervised regime.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Plan template for the unsupervised regime.
    #[arg(long)]
    pub plan: Option<PathBuf>,
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    match s {
        "supervised" => Ok(Regime::Supervised),
        "unsupervised" => Ok(Regime::Unsupervised),
        _ => Err(format!("unknown regime `{s}` (supervised|unsupervised)")),
    }
}

impl TuneArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(d) = &self.dataset {
            cfg.paths.dataset = Some(d.clone());
        }
        if let Some(r) = self.regime {
            cfg.tune.regime = r;
        }
        if let Some(d) = &self.detections {
            cfg.paths.detections = Some(d.clone());
        }
        if let Some(p) = &self.plan {
            cfg.paths.plan = Some(p.clone());
        }
    }
}

#[derive(Serialize)]
struct SweepRow {
    state: usize,
    label: String,
    mean_reward: f64,
}

#[derive(Serialize)]
struct TuneSummary {
    regime: Regime,
    greedy_state: usize,
    greedy_label: String,
    sweep_best_state: usize,
    sweep_best_reward: f64,
    n_images: usize,
}

fn all_truth_present(dir: &Path) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(dir.join("dataset.json")).with_context(|| format!("reading {}/dataset.json", dir.display()))?;
    let m: DatasetManifest = serde_json::from_str(&text)?;
    Ok(m.ids.iter().all(|id| dir.join("truth").join(format!("{id}.json")).is_file()))
}

fn finish<E: Environment>(run: &mut Run, env: &E, cfg: &PipelineConfig, bindings: BTreeMap<String, f64>, greedy: usize, q: &QTable<f64>) -> anyhow::Result<()> {
    let rewards = sweep(env)?;
    let mut w = csv::Writer::from_path(run.path("sweep.csv"))?;
    for (state, &mean_reward) in rewards.iter().enumerate() {
        w.serialize(SweepRow { state, label: env.state_label(state), mean_reward })?;
    }
    w.flush()?;
    run.artifact("sweep.csv");
    let best = (0..rewards.len()).fold(0, |b, s| if rewards[s] > rewards[b] { s } else { b });
    let rows: Vec<Vec<f64>> = (0..q.n_states()).map(|s| q.row(s).to_vec()).collect();
    run.write_json("q_table.json", &rows)?;
    run.write_json("bindings.json", &bindings)?;
    run.write_json(
        "tune_summary.json",
        &TuneSummary {
            regime: cfg.tune.regime,
            greedy_state: greedy,
            greedy_label: env.state_label(greedy),
            sweep_best_state: best,
            sweep_best_reward: rewards[best],
            n_images: env.n_images(),
        },
    )?;
    log::info!("greedy {} (sweep best {})", env.state_label(greedy), env.state_label(best));
    Ok(())
}

fn supervised(cfg: &PipelineConfig, run: &mut Run, dir: &Path) -> anyhow::Result<()> {
    if !all_truth_present(dir)? {
        return Err(VerifyError::MissingGroundTruth("truth boxes").into());
    }
    let (detections, kinds): (_, Option<BTreeSet<String>>) = match &cfg.paths.detections {
        Some(p) => {
            run.input("detections", p)?;
            let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let d = read_scored_jsonl(std::io::BufReader::new(f))?;
            let kinds = d.iter().map(|d| d.rule_id.clone()).collect();
            (d, Some(kinds))
        }
        None => {
            let (_, samples) = load_dataset(dir)?;
            let d: Vec<_> = samples.iter().flat_map(|s| scored_synthetic_detections(s, &cfg.tune.noise, cfg.seed)).collect();
            let mut buf = Vec::new();
            write_scored_jsonl(&mut buf, &d)?;
            run.write("detections.jsonl", buf)?;
            (d, None)
        }
    };
    let (_, images) = load_images(dir)?;
    let truth: BTreeMap<String, _> = images
        .iter()
        .map(|im| {
            let boxes = im
                .truth
                .iter()
                .flatten()
                .filter(|l| kinds.as_ref().is_none_or(|k| k.contains(l.kind.rule_id())))
                .map(|l| l.bbox)
                .collect();
            (im.id.clone(), boxes)
        })
        .collect();
    let env = SupervisedEnv::from_detections(&detections, &truth)?;
    let (q, log) = train_agent::<f64, _>(&env, &cfg.tune.q)?;
    log.write_csv(&run.path("episodes.csv"))?;
    run.artifact("episodes.csv");
    let g = greedy_param(&q);
    let bindings = [("confidence_threshold".to_string(), SupervisedEnv::threshold(g))].into();
    finish(run, &env, cfg, bindings, g, &q)
}

fn targets(cfg: &PipelineConfig, run: &mut Run, rule_id: &str, images: &[DatasetImage]) -> anyhow::Result<Vec<u32>> {
    match cfg.tune.targets {
        TargetSource::Truth => {
            let kind = LesionKind::from_rule_id(rule_id).ok_or_else(|| Invalid(format!("no lesion kind for rule `{rule_id}`")))?;
            images
                .iter()
                .map(|im| {
                    im.truth_boxes(kind).map(|b| b.len() as u32).ok_or(VerifyError::MissingGroundTruth("lesion counts").into())
                })
                .collect()
        }
        TargetSource::Rulebase => {
            let rb = rulebase(cfg, run)?;
            let rule = rb.get(rule_id).ok_or_else(|| Invalid(format!("rule base has no rule `{rule_id}`")))?;
            images
                .iter()
                .map(|im| {
                    rule.expected_target(&format!("grade_{}", im.grade))
                        .ok_or_else(|| Invalid(format!("rule `{rule_id}` has no expected count for grade {}", im.grade)).into())
                })
                .collect()
        }
    }
}

fn unsupervised(cfg: &PipelineConfig, run: &mut Run, dir: &Path) -> anyhow::Result<()> {
    let plan = single_plan(cfg, run, "exudates")?;
    let (_, mut images) = load_images(dir)?;
    images.truncate(cfg.tune.images);
    let targets = targets(cfg, run, &plan.rule_id, &images)?;
    let env = UnsupervisedEnv::new(&plan, images.into_iter().map(|im| im.image).collect(), targets)?;
    let (q, log) = train_agent::<f64, _>(&env, &cfg.tune.q)?;
    log.write_csv(&run.path("episodes.csv"))?;
    run.artifact("episodes.csv");
    let g = greedy_param(&q);
    let (clip, disc) = UnsupervisedEnv::params(g);
    let bindings = [("clip_limit".to_string(), clip), ("disc_threshold".to_string(), disc)].into();
    finish(run, &env, cfg, bindings, g, &q)
}

pub fn run(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("tune", out, cfg)?;
    let dir = dataset(cfg, &mut run)?;
    match cfg.tune.regime {
        Regime::Supervised => supervised(cfg, &mut run, &dir)?,
        Regime::Unsupervised => unsupervised(cfg, &mut run, &dir)?,
    }
    run.finish()?;
    Ok(())
}
