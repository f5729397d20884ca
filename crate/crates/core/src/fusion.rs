//! Confidence-gated fusion of an external deep model with the knowledge
//! classifier, and detection localization accuracy.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{greedy_match, Box};
use crate::scalar::{max_of, Field};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("no truth objects; localization accuracy is undefined")]
    UndefinedMetric,
    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("image ids differ between inputs: {0:?}")]
    ReportedMissingIds(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, FusionError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalPrediction {
    pub image_id: String,
    #[serde(rename = "label")]
    pub y_dl: usize,
    #[serde(rename = "confidence")]
    pub s_dl: f64,
}

impl ExternalPrediction {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.s_dl) {
            return Err(FusionError::InvalidPrediction(format!("{}: confidence {} outside [0,1]", self.image_id, self.s_dl)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Deep,
    Knowledge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionDecision {
    pub image_id: String,
    pub y_dl: usize,
    pub s_dl: f64,
    pub y_kd: usize,
    pub s_kd: f64,
    pub y_final: usize,
    pub source: Source,
}

/// Largest class probability.
pub fn knowledge_confidence<T: Field>(proba: &[T]) -> T {
    proba.iter().copied().fold(T::zero(), max_of)
}

/// Deep prediction when `s_dl >= s_kd`, knowledge prediction otherwise.
pub fn fuse(dl: &ExternalPrediction, y_kd: usize, kd_proba: &[f64]) -> FusionDecision {
    let s_kd = knowledge_confidence(kd_proba);
    let deep = dl.s_dl >= s_kd;
    FusionDecision {
        image_id: dl.image_id.clone(),
        y_dl: dl.y_dl,
        s_dl: dl.s_dl,
        y_kd,
        s_kd,
        y_final: if deep { dl.y_dl } else { y_kd },
        source: if deep { Source::Deep } else { Source::Knowledge },
    }
}

/// Fuses every image; both sides must cover the same ids. Output is sorted
/// by image id.
pub fn fuse_all(
    deep: &[ExternalPrediction],
    knowledge: &BTreeMap<String, (usize, Vec<f64>)>,
) -> Result<Vec<FusionDecision>> {
    let deep_ids: BTreeMap<&str, &ExternalPrediction> = deep.iter().map(|d| (d.image_id.as_str(), d)).collect();
    let mut missing: Vec<String> = deep_ids.keys().filter(|k| !knowledge.contains_key(**k)).map(|k| k.to_string()).collect();
    missing.extend(knowledge.keys().filter(|k| !deep_ids.contains_key(k.as_str())).cloned());
    if !missing.is_empty() || deep_ids.len() != deep.len() {
        missing.sort();
        return Err(FusionError::ReportedMissingIds(missing));
    }
    deep_ids
        .values()
        .map(|dl| {
            dl.validate()?;
            let (y, p) = &knowledge[dl.image_id.as_str()];
            Ok(fuse(dl, *y, p))
        })
        .collect()
}

/// Share of truth objects matched one-to-one (greedy, descending IoU) by a
/// detection with IoU at least `iou_min`.
pub fn localization_accuracy<T: Field>(detections: &[Vec<Box>], truths: &[Vec<Box>], iou_min: T) -> Result<T> {
    if detections.len() != truths.len() {
        return Err(FusionError::InvalidPrediction(format!("{} detection sets for {} images", detections.len(), truths.len())));
    }
    let total: usize = truths.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(FusionError::UndefinedMetric);
    }
    let matched: usize = detections
        .iter()
        .zip(truths)
        .map(|(d, t)| greedy_match::<T>(d, t).into_iter().filter(|m| m.2 >= iou_min).count())
        .sum();
    Ok(T::from_count(matched) / T::from_count(total))
}

pub fn read_predictions_jsonl(r: impl BufRead) -> Result<Vec<ExternalPrediction>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: ExternalPrediction =
            serde_json::from_str(&line).map_err(|e| FusionError::Parse { line: i + 1, message: e.to_string() })?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_fusion_csv(path: &Path, decisions: &[FusionDecision]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for d in decisions {
        w.serialize(d)?;
    }
    w.flush()?;
    Ok(())
}
