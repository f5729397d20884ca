use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LesionKind, SynthSample};
use crate::imaging::Box;
use crate::rng::{derive, gaussian_noise, stream};

/// One scored detection; the line-delimited interchange record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection {
    pub image_id: String,
    pub rule_id: String,
    pub bbox: Box,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreModel {
    Constant { score: f64 },
    /// True detections ~ U[true_lo, true_hi), spurious ~ U[spur_lo, spur_hi).
    Split { true_lo: f64, true_hi: f64, spur_lo: f64, spur_hi: f64 },
}

impl Default for ScoreModel {
    fn default() -> Self {
        ScoreModel::Split { true_lo: 0.6, true_hi: 1.0, spur_lo: 0.0, spur_hi: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionNoise {
    /// Per-coordinate jitter stddev in thousandths of a pixel.
    pub jitter_sigma_milli: u32,
    pub drop_rate: f64,
    /// Expected spurious boxes per truth object (one trial per object, at
    /// least one trial per image).
    pub spurious_rate: f64,
    pub score_model: ScoreModel,
}

impl DetectionNoise {
    pub fn none() -> Self {
        Self { jitter_sigma_milli: 0, drop_rate: 0.0, spurious_rate: 0.0, score_model: ScoreModel::Constant { score: 1.0 } }
    }
}

impl Default for DetectionNoise {
    fn default() -> Self {
        Self { jitter_sigma_milli: 1000, drop_rate: 0.1, spurious_rate: 0.8, score_model: ScoreModel::default() }
    }
}

const SALT_SCORED: u64 = 0x5c0ed;

fn draw(rng: &mut crate::rng::Stream, lo: f64, hi: f64) -> f64 {
    if hi > lo { rng.random_range(lo..hi) } else { lo }
}

/// Detector-like output for `sample`: truth boxes jittered and possibly
/// dropped, plus spurious boxes that do not touch any truth box.
pub fn scored_synthetic_detections(sample: &SynthSample, noise: &DetectionNoise, seed: u64) -> Vec<ScoredDetection> {
    let mut rng = stream(derive(seed, SALT_SCORED, crate::rng::splitmix64(sample.spec.seed)));
    let size = sample.spec.size as i64;
    let drop = noise.drop_rate.clamp(0.0, 1.0);
    let spur = noise.spurious_rate.clamp(0.0, 1.0);
    let (true_score, spur_score) = match noise.score_model {
        ScoreModel::Constant { score } => ((score, score), (score, score)),
        ScoreModel::Split { true_lo, true_hi, spur_lo, spur_hi } => ((true_lo, true_hi), (spur_lo, spur_hi)),
    };
    let mut out = Vec::new();
    for t in &sample.truth {
        if rng.random_bool(drop) {
            continue;
        }
        let j = |rng: &mut _, v: u32| v as i64 + gaussian_noise(rng, noise.jitter_sigma_milli as i64);
        let mut x0 = j(&mut rng, t.bbox.x0).clamp(0, size - 1);
        let mut y0 = j(&mut rng, t.bbox.y0).clamp(0, size - 1);
        let x1 = j(&mut rng, t.bbox.x1).clamp(1, size);
        let y1 = j(&mut rng, t.bbox.y1).clamp(1, size);
        x0 = x0.min(x1 - 1);
        y0 = y0.min(y1 - 1);
        let bbox = Box { x0: x0 as u32, y0: y0 as u32, x1: x1 as u32, y1: y1 as u32 };
        out.push(ScoredDetection {
            image_id: sample.id.clone(),
            rule_id: t.kind.rule_id().to_string(),
            bbox,
            score: draw(&mut rng, true_score.0, true_score.1),
        });
    }
    let truth = sample.all_truth_boxes();
    for _ in 0..sample.truth.len().max(1) {
        if !rng.random_bool(spur) {
            continue;
        }
        for _ in 0..1000 {
            let w = rng.random_range(6..=20i64);
            let h = rng.random_range(6..=20i64);
            let x0 = rng.random_range(0..size - w);
            let y0 = rng.random_range(0..size - h);
            let bbox = Box { x0: x0 as u32, y0: y0 as u32, x1: (x0 + w) as u32, y1: (y0 + h) as u32 };
            if truth.iter().all(|b| b.intersection_area(&bbox) == 0) {
                let kind = LesionKind::ALL[rng.random_range(0..4usize)];
                out.push(ScoredDetection {
                    image_id: sample.id.clone(),
                    rule_id: kind.rule_id().to_string(),
                    bbox,
                    score: draw(&mut rng, spur_score.0, spur_score.1),
                });
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_sample, LesionCounts, SceneSpec};

    fn sample() -> SynthSample {
        let counts = LesionCounts { exudates: 3, hemorrhages: 4, microaneurysms: 2, cotton_wool: 1 };
        generate_sample(&SceneSpec::new(4, 256, counts)).unwrap()
    }

    #[test]
    fn zero_noise_is_truth() {
        let s = sample();
        let d = scored_synthetic_detections(&s, &DetectionNoise::none(), 1);
        assert_eq!(d.iter().map(|d| d.bbox).collect::<Vec<_>>(), s.all_truth_boxes());
        assert!(d.iter().all(|d| d.score == 1.0));
    }

    #[test]
    fn full_drop_leaves_spurious() {
        let s = sample();
        let noise = DetectionNoise { drop_rate: 1.0, spurious_rate: 1.0, ..DetectionNoise::default() };
        let d = scored_synthetic_detections(&s, &noise, 1);
        assert_eq!(d.len(), s.truth.len());
        let truth = s.all_truth_boxes();
        for det in &d {
            assert!(truth.iter().all(|t| t.intersection_area(&det.bbox) == 0));
            assert!(det.score < 0.5);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = sample();
        let n = DetectionNoise::default();
        assert_eq!(scored_synthetic_detections(&s, &n, 5), scored_synthetic_detections(&s, &n, 5));
        assert_ne!(scored_synthetic_detections(&s, &n, 5), scored_synthetic_detections(&s, &n, 6));
    }
}
