use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use kgx_core::assets;
use kgx_core::classify::{
    evaluate, stratified_split, train as train_model, Dataset, MetricsReport, ModelKind, TrainedModel,
};
use kgx_core::fusion::localization_accuracy;
use kgx_core::imaging::Box;
use kgx_core::plan::{bind_params, execute_plan, parse_plan, ExtractionPlan, ExtractionResult};
use kgx_core::rules::{vectorize, write_feature_csv, FeatureSchema};
use kgx_core::synth::{load_images, DatasetImage, LesionKind};

use super::{bindings, dataset, read_plan, rulebase, seeded_order};
use crate::config::PipelineConfig;
use crate::manifest::Run;
use crate::Invalid;

const SALT_SHUFFLE: u64 = 0x5bff;
const N_CLASSES: usize = 5;

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Directory of `<rule_id>.json` plans; defaults to the bundled set.
    #[arg(long)]
    pub plans: Option<PathBuf>,
    #[arg(long)]
    pub rulebase: Option<PathBuf>,
    #[arg(long)]
    pub bindings: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<ModelKind>,
    /// Permute labels before splitting (chance-level control).
    #[arg(long)]
    pub shuffle_labels: bool,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    ModelKind::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown model `{s}` ({})", names.join("|"))
    })
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(d) = &self.dataset {
            cfg.paths.dataset = Some(d.clone());
        }
        if let Some(p) = &self.plans {
            cfg.paths.plans = Some(p.clone());
        }
        if let Some(r) = &self.rulebase {
            cfg.paths.rulebase = Some(r.clone());
        }
        if let Some(b) = &self.bindings {
            cfg.paths.bindings = Some(b.clone());
        }
        if let Some(k) = self.kind {
            cfg.classifier.kind = k;
        }
        if self.shuffle_labels {
            cfg.classifier.shuffle_labels = true;
        }
    }
}

/// One knowledge-classifier output line.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct KdOutput {
    pub image_id: String,
    pub split: String,
    pub label: usize,
    pub y_kd: usize,
    pub proba: Vec<f64>,
}

#[derive(Serialize)]
struct Localization {
    iou_min: f64,
    overall: Option<f64>,
    per_rule: BTreeMap<String, Option<f64>>,
    n_truth: usize,
}

/// Concrete plans for every visual rule that has one; the rest are
/// reported and left out.
fn load_plans(cfg: &PipelineConfig, run: &mut Run, rule_ids: &[String]) -> anyhow::Result<Vec<ExtractionPlan>> {
    let overrides = bindings(cfg, run)?;
    if let Some(dir) = &cfg.paths.plans {
        run.input("plans", dir)?;
    }
    let mut plans = Vec::new();
    for id in rule_ids {
        let plan = match &cfg.paths.plans {
            Some(dir) => {
                let p = dir.join(format!("{id}.json"));
                if p.is_file() { Some(read_plan(&p)?) } else { None }
            }
            None => assets::reference_plan(id).map(parse_plan).transpose()?,
        };
        let Some(plan) = plan else {
            log::warn!("no plan for visual rule `{id}`; its features stay zero");
            continue;
        };
        if plan.rule_id != *id {
            return Err(Invalid(format!("plan for `{id}` targets rule `{}`", plan.rule_id)).into());
        }
        let mut b = plan.default_bindings();
        for (k, v) in &overrides {
            if let Some(slot) = b.get_mut(k) {
                *slot = *v;
            }
        }
        let (bound, flags) = bind_params(&plan, &b)?;
        for f in flags {
            log::warn!("{id}: {f:?}");
        }
        plans.push(bound);
    }
    Ok(plans)
}

fn localization(images: &[DatasetImage], results: &[Vec<ExtractionResult>], iou_min: f64) -> Localization {
    let mut per_rule = BTreeMap::new();
    let (mut all_d, mut all_t) = (Vec::new(), Vec::new());
    let rules: Vec<&str> = results.first().map(|r| r.iter().map(|x| x.rule_id.as_str()).collect()).unwrap_or_default();
    for (j, rule) in rules.iter().enumerate() {
        let Some(kind) = LesionKind::from_rule_id(rule) else { continue };
        let (mut d, mut t): (Vec<Vec<Box>>, Vec<Vec<Box>>) = (Vec::new(), Vec::new());
        for (im, res) in images.iter().zip(results) {
            if let Some(truth) = im.truth_boxes(kind) {
                d.push(res[j].boxes());
                t.push(truth);
            }
        }
        per_rule.insert(rule.to_string(), localization_accuracy::<f64>(&d, &t, iou_min).ok());
        all_d.extend(d);
        all_t.extend(t);
    }
    Localization {
        iou_min,
        overall: localization_accuracy::<f64>(&all_d, &all_t, iou_min).ok(),
        per_rule,
        n_truth: all_t.iter().map(Vec::len).sum(),
    }
}

pub fn run(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("extract-train-eval", out, cfg)?;
    let rb = rulebase(cfg, &mut run)?;
    let mut schema = FeatureSchema::from_rulebase(&rb)?;
    let visual: Vec<String> = rb.visual().map(|r| r.rule_id.clone()).collect();
    let plans = load_plans(cfg, &mut run, &visual)?;
    let dir = dataset(cfg, &mut run)?;
    let (_, images) = load_images(&dir)?;
    let n = images.len();

    let results: Vec<Vec<ExtractionResult>> = images
        .par_iter()
        .map(|im| plans.iter().map(|p| execute_plan(p, &im.image)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()
        .context("executing plans")?;
    log::info!("extracted {} plans on {n} images", plans.len());

    let mut labels: Vec<usize> = images.iter().map(|im| im.grade as usize).collect();
    if cfg.classifier.shuffle_labels {
        let perm = seeded_order(n, cfg.seed, SALT_SHUFFLE);
        labels = perm.iter().map(|&i| labels[i]).collect();
    }
    let ids: Vec<String> = images.iter().map(|im| im.id.clone()).collect();
    let index = Dataset::new((0..n).map(|i| vec![i as f64]).collect(), labels.clone(), ids.clone(), N_CLASSES)?;
    let (tr, va, te) = stratified_split(&index, cfg.classifier.fractions, cfg.seed)?;
    let part = |d: &Dataset| -> Vec<usize> { d.features.iter().map(|f| f[0] as usize).collect() };
    let (tr, va, te) = (part(&tr), part(&va), part(&te));
    let mut split = vec![""; n];
    for (name, idx) in [("train", &tr), ("val", &va), ("test", &te)] {
        for &i in idx {
            split[i] = name;
        }
    }

    let train_demo: Vec<_> = tr.iter().map(|&i| images[i].demographic).collect();
    schema.fit_demographics(&train_demo);
    let features: Vec<Vec<f64>> = images
        .iter()
        .zip(&results)
        .map(|(im, res)| vectorize(res, &im.demographic, &schema))
        .collect::<Result<_, _>>()?;
    let fingerprint = schema.fingerprint();
    let subset = |idx: &[usize]| {
        Dataset::new(
            idx.iter().map(|&i| features[i].clone()).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
            idx.iter().map(|&i| ids[i].clone()).collect(),
            N_CLASSES,
        )
    };
    let (train_ds, val_ds, test_ds) = (subset(&tr)?, subset(&va)?, subset(&te)?);
    let model: TrainedModel = train_model(cfg.classifier.kind, &train_ds, &cfg.classifier.hyperparams, &fingerprint)?;

    let val_pred = model.predict_all(&fingerprint, &val_ds.features)?;
    let test_pred = model.predict_all(&fingerprint, &test_ds.features)?;
    let val = evaluate::<f64>(&val_pred, &val_ds.labels, N_CLASSES)?;
    let test = evaluate::<f64>(&test_pred, &test_ds.labels, N_CLASSES)?;
    let report = MetricsReport::new(cfg.classifier.kind.name(), &val, &test);
    log::info!("{}: val {:.4} test {:.4}", report.model, report.val_accuracy, report.test_accuracy);

    let rows: Vec<_> = (0..n).map(|i| (ids[i].clone(), labels[i], features[i].clone())).collect();
    write_feature_csv(&run.path("features.csv"), &schema, &rows)?;
    run.artifact("features.csv");
    run.write_json("schema.json", &schema)?;
    model.save(&run.path("model.json"))?;
    run.artifact("model.json");
    run.write_json("metrics.json", &report)?;
    report.write_confusion_csv(&run.path("confusion.csv"))?;
    run.artifact("confusion.csv");

    let mut kd = String::new();
    for i in 0..n {
        let proba = model.predict_proba(&fingerprint, &features[i])?;
        let line = KdOutput {
            image_id: ids[i].clone(),
            split: split[i].to_string(),
            label: labels[i],
            y_kd: kgx_core::classify::argmax(&proba),
            proba,
        };
        kd.push_str(&serde_json::to_string(&line)?);
        kd.push('\n');
    }
    run.write("kd_outputs.jsonl", kd)?;
    run.write_json("localization.json", &localization(&images, &results, cfg.classifier.iou_min))?;
    run.finish()?;
    Ok(())
}
