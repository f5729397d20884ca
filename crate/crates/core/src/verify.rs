//! Entropic gain and the self-verification refinement loop.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{box_iou, greedy_match, Box, Raster};
use crate::llm::{RefinementFeedback, Refiner};
use crate::plan::{bind_params, execute_plan, ClampFlag, ExtractionPlan, ExtractionResult, PlanError};
use crate::scalar::{clamp_unit, Real};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("regime needs {0} for every validation image")]
    MissingGroundTruth(&'static str),
    #[error("need at least 2 scores, got {0}")]
    TooFewScores(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

pub type Result<T> = std::result::Result<T, VerifyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Supervised,
    Unsupervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    Entropy,
    MeanScore,
}

/// Reference for one validation image: boxes (supervised) or an expected
/// count (unsupervised).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageTruth {
    pub boxes: Option<Vec<Box>>,
    pub expected_count: Option<u32>,
}

impl ImageTruth {
    pub fn boxes(boxes: Vec<Box>) -> Self {
        Self { expected_count: Some(boxes.len() as u32), boxes: Some(boxes) }
    }

    pub fn count(n: u32) -> Self {
        Self { boxes: None, expected_count: Some(n) }
    }
}

pub fn unsupervised_score(n_detected: usize, n_target: usize) -> f64 {
    let err = (n_detected as f64 - n_target as f64).abs();
    clamp_unit(1.0 - err / (n_target.max(1) as f64))
}

/// Empirical correctness of one extraction.
///
/// Supervised: mean over truth boxes of the best IoU with any detection; an
/// image with no truth scores 1 when nothing is detected and 0 otherwise.
pub fn per_image_score(result: &ExtractionResult, truth: &ImageTruth, regime: Regime) -> Result<f64> {
    match regime {
        Regime::Supervised => {
            let boxes = truth.boxes.as_ref().ok_or(VerifyError::MissingGroundTruth("truth boxes"))?;
            if boxes.is_empty() {
                return Ok(if result.detections.is_empty() { 1.0 } else { 0.0 });
            }
            let dets = result.boxes();
            let total: f64 =
                boxes.iter().map(|t| dets.iter().map(|d| box_iou::<f64>(d, t)).fold(0.0, f64::max)).sum();
            Ok(total / boxes.len() as f64)
        }
        Regime::Unsupervised => {
            let n = truth.expected_count.ok_or(VerifyError::MissingGroundTruth("an expected count"))?;
            Ok(unsupervised_score(result.count, n as usize))
        }
    }
}

/// Shannon entropy of the scores normalized to a distribution; all-zero
/// scores count as uniform.
pub fn entropic_gain<T: Real>(scores: &[T]) -> Result<T> {
    if scores.len() < 2 {
        return Err(VerifyError::TooFewScores(scores.len()));
    }
    let sum = scores.iter().fold(T::zero(), |a, &s| a + s);
    let k = T::from_count(scores.len());
    let mut e = T::zero();
    for &s in scores {
        let p = if sum > T::zero() { s / sum } else { T::one() / k };
        if p > T::zero() {
            e = e - p * p.ln();
        }
    }
    Ok(e.max(T::zero()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerificationConfig {
    pub mode: VerifyMode,
    /// Defaults: 0.9 ln K in entropy mode, 0.7 in mean-score mode.
    pub tau: Option<f64>,
    pub max_iterations: u32,
    pub regime: Regime,
    /// Slot bindings applied on top of each plan version's defaults.
    pub bindings: BTreeMap<String, f64>,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self { mode: VerifyMode::MeanScore, tau: None, max_iterations: 5, regime: Regime::Supervised, bindings: BTreeMap::new() }
    }
}

impl VerificationConfig {
    pub fn tau_for(&self, k: usize) -> f64 {
        self.tau.unwrap_or(match self.mode {
            VerifyMode::Entropy => 0.9 * (k as f64).ln(),
            VerifyMode::MeanScore => 0.7,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ThresholdMet,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanVersion {
    pub iteration: u32,
    pub plan: ExtractionPlan,
    pub per_image_scores: Vec<f64>,
    pub entropic_gain: f64,
    pub mean_score: f64,
    pub feedback: RefinementFeedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub tau: f64,
    pub mode: VerifyMode,
    pub plan_versions: Vec<PlanVersion>,
    pub passed: bool,
    pub stop_reason: StopReason,
    pub final_plan: ExtractionPlan,
    /// Set when the refiner gave up before the budget ran out.
    pub refiner_error: Option<String>,
}

/// Runs `plan` on every image and summarizes the outcome for Prompt 3.
pub fn evaluate_plan(
    plan: &ExtractionPlan,
    images: &[(&Raster, ImageTruth)],
    regime: Regime,
    overrides: &BTreeMap<String, f64>,
) -> Result<RefinementFeedback> {
    let mut bindings = plan.default_bindings();
    for (k, v) in overrides {
        if bindings.contains_key(k) {
            bindings.insert(k.clone(), *v);
        }
    }
    let (bound, clamp_flags): (ExtractionPlan, Vec<ClampFlag>) = bind_params(plan, &bindings)?;
    let results: Vec<std::result::Result<ExtractionResult, PlanError>> =
        images.par_iter().map(|(img, _)| execute_plan(&bound, img)).collect();

    let mut scores = Vec::with_capacity(images.len());
    let (mut ious, mut bias) = (Vec::new(), 0.0);
    let (mut tp_det, mut n_det, mut tp_truth, mut n_truth) = (0usize, 0usize, 0usize, 0usize);
    for (res, (_, truth)) in results.iter().zip(images) {
        let res = match res {
            Ok(r) => r,
            Err(e) => {
                log::warn!("plan {} failed on a validation image: {e}", plan.plan_id);
                scores.push(0.0);
                continue;
            }
        };
        scores.push(per_image_score(res, truth, regime)?);
        let target = match (&truth.boxes, truth.expected_count) {
            (Some(b), _) => b.len(),
            (None, Some(n)) => n as usize,
            (None, None) => 0,
        };
        bias += res.count as f64 - target as f64;
        n_det += res.count;
        n_truth += target;
        match (&truth.boxes, regime) {
            (Some(boxes), Regime::Supervised) => {
                let dets = res.boxes();
                for t in boxes {
                    ious.push(dets.iter().map(|d| box_iou::<f64>(d, t)).fold(0.0, f64::max));
                }
                let good = greedy_match::<f64>(&dets, boxes).into_iter().filter(|m| m.2 >= 0.5).count();
                tp_det += good;
                tp_truth += good;
            }
            _ => {
                let hit = res.count.min(target);
                tp_det += hit;
                tp_truth += hit;
            }
        }
    }
    let k = scores.len().max(1) as f64;
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    Ok(RefinementFeedback {
        entropic_gain: if scores.len() >= 2 { entropic_gain(&scores)? } else { 0.0 },
        mean_score: scores.iter().sum::<f64>() / k,
        iou_mean: if ious.is_empty() { 0.0 } else { ious.iter().sum::<f64>() / ious.len() as f64 },
        iou_min: ious.iter().copied().fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v)))).unwrap_or(0.0),
        precision: ratio(tp_det, n_det),
        recall: ratio(tp_truth, n_truth),
        count_bias: bias / k,
        clamp_flags,
        per_image_scores: scores,
    })
}

fn meets(mode: VerifyMode, tau: f64, fb: &RefinementFeedback) -> bool {
    match mode {
        VerifyMode::Entropy => fb.entropic_gain >= tau,
        VerifyMode::MeanScore => fb.mean_score >= tau,
    }
}

/// Evaluate, stop if the criterion holds, otherwise refine; at most
/// `max_iterations` evaluations.
pub fn verify_and_refine(
    plan: &ExtractionPlan,
    images: &[(&Raster, ImageTruth)],
    refiner: &dyn Refiner,
    config: &VerificationConfig,
) -> Result<VerificationReport> {
    if images.len() < 2 {
        return Err(VerifyError::InvalidConfig(format!("need K >= 2 validation images, got {}", images.len())));
    }
    if config.max_iterations == 0 {
        return Err(VerifyError::InvalidConfig("max_iterations must be >= 1".into()));
    }
    let tau = config.tau_for(images.len());
    if !tau.is_finite() {
        return Err(VerifyError::InvalidConfig("tau must be finite".into()));
    }
    let mut versions: Vec<PlanVersion> = Vec::new();
    let mut current = plan.clone();
    let mut refiner_error = None;
    for iteration in 0..config.max_iterations {
        let fb = evaluate_plan(&current, images, config.regime, &config.bindings)?;
        let met = meets(config.mode, tau, &fb);
        versions.push(PlanVersion {
            iteration,
            plan: current.clone(),
            per_image_scores: fb.per_image_scores.clone(),
            entropic_gain: fb.entropic_gain,
            mean_score: fb.mean_score,
            feedback: fb.clone(),
        });
        if met {
            return Ok(VerificationReport {
                tau,
                mode: config.mode,
                final_plan: current,
                plan_versions: versions,
                passed: true,
                stop_reason: StopReason::ThresholdMet,
                refiner_error: None,
            });
        }
        if iteration + 1 == config.max_iterations {
            break;
        }
        match refiner.refine(&current, &fb) {
            Ok(next) => current = next,
            Err(e) => {
                refiner_error = Some(e.to_string());
                break;
            }
        }
    }
    // best by mean score; earliest wins ties
    let best = versions
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if v.mean_score > versions[b].mean_score { i } else { b });
    Ok(VerificationReport {
        tau,
        mode: config.mode,
        final_plan: versions[best].plan.clone(),
        plan_versions: versions,
        passed: false,
        stop_reason: StopReason::BudgetExhausted,
        refiner_error,
    })
}
