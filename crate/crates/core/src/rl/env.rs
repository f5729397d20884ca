use std::collections::BTreeMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::{supervised_reward, unsupervised_reward, Environment, Result, RlError};
use crate::imaging::{Box, Raster};
use crate::plan::{bind_params, execute_plan, ExtractionPlan};
use crate::synth::ScoredDetection;

/// Confidence thresholds 0.05, 0.10, ..., 0.95.
pub const THRESHOLD_GRID: [f64; 19] = {
    let mut g = [0.0; 19];
    let mut i = 0;
    while i < 19 {
        g[i] = (i + 1) as f64 / 20.0;
        i += 1;
    }
    g
};

pub const CLIP_GRID: [f64; 9] = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];
pub const DISC_GRID: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedImage {
    pub image_id: String,
    pub detections: Vec<(Box, f64)>,
    pub truth: Vec<Box>,
}

/// Detector confidence-threshold tuning. Actions: 0 = down, 1 = stay, 2 = up.
pub struct SupervisedEnv {
    images: Vec<SupervisedImage>,
    rewards: Vec<f64>,
}

impl SupervisedEnv {
    pub fn new(images: Vec<SupervisedImage>) -> Result<Self> {
        if images.is_empty() {
            return Err(RlError::EmptyDataset);
        }
        let mut rewards = Vec::with_capacity(THRESHOLD_GRID.len() * images.len());
        for t in THRESHOLD_GRID {
            rewards.extend(images.iter().map(|im| supervised_reward::<f64>(&im.detections, &im.truth, t)));
        }
        Ok(Self { images, rewards })
    }

    /// One image per key of `truth`, in key order; detections for images
    /// outside `truth` are an error.
    pub fn from_detections(detections: &[ScoredDetection], truth: &BTreeMap<String, Vec<Box>>) -> Result<Self> {
        let mut grouped: BTreeMap<&str, Vec<(Box, f64)>> = truth.keys().map(|k| (k.as_str(), Vec::new())).collect();
        for d in detections {
            grouped
                .get_mut(d.image_id.as_str())
                .ok_or_else(|| RlError::Env(format!("detection for unknown image `{}`", d.image_id)))?
                .push((d.bbox, d.score));
        }
        let images = truth
            .iter()
            .map(|(id, boxes)| SupervisedImage {
                image_id: id.clone(),
                detections: grouped.remove(id.as_str()).unwrap_or_default(),
                truth: boxes.clone(),
            })
            .collect();
        Self::new(images)
    }

    pub fn images(&self) -> &[SupervisedImage] {
        &self.images
    }

    pub fn threshold(state: usize) -> f64 {
        THRESHOLD_GRID[state]
    }
}

impl Environment for SupervisedEnv {
    fn n_states(&self) -> usize {
        THRESHOLD_GRID.len()
    }

    fn n_actions(&self) -> usize {
        3
    }

    fn step(&self, state: usize, action: usize) -> usize {
        (state + action).saturating_sub(1).min(THRESHOLD_GRID.len() - 1)
    }

    fn n_images(&self) -> usize {
        self.images.len()
    }

    fn reward(&self, state: usize, images: &[usize]) -> Result<f64> {
        let row = &self.rewards[state * self.images.len()..(state + 1) * self.images.len()];
        Ok(images.iter().map(|&i| row[i]).sum::<f64>() / images.len().max(1) as f64)
    }

    fn state_label(&self, state: usize) -> String {
        format!("{:.2}", THRESHOLD_GRID[state])
    }
}

/// CLAHE clip limit x disc threshold tuning of a plan template with
/// `$clip_limit` and `$disc_threshold` slots. State = clip index * 10 +
/// disc index; action = 3 * (clip move + 1) + (disc move + 1).
///
/// Detection counts are memoized per (state, image), so one environment can
/// be shared by many agents.
pub struct UnsupervisedEnv {
    plans: Vec<ExtractionPlan>,
    images: Vec<Raster>,
    targets: Vec<u32>,
    counts: Vec<OnceLock<std::result::Result<usize, String>>>,
}

impl UnsupervisedEnv {
    pub fn new(template: &ExtractionPlan, images: Vec<Raster>, targets: Vec<u32>) -> Result<Self> {
        if images.is_empty() {
            return Err(RlError::EmptyDataset);
        }
        if images.len() != targets.len() {
            return Err(RlError::Env(format!("{} images but {} targets", images.len(), targets.len())));
        }
        for slot in ["clip_limit", "disc_threshold"] {
            if !template.params.contains_key(slot) {
                return Err(RlError::Env(format!("plan `{}` has no `{slot}` slot", template.plan_id)));
            }
        }
        let mut plans = Vec::with_capacity(CLIP_GRID.len() * DISC_GRID.len());
        for clip in CLIP_GRID {
            for disc in DISC_GRID {
                let mut b = template.default_bindings();
                b.insert("clip_limit".into(), clip);
                b.insert("disc_threshold".into(), disc);
                let (bound, _) = bind_params(template, &b).map_err(|e| RlError::Env(e.to_string()))?;
                plans.push(bound);
            }
        }
        let counts = (0..plans.len() * images.len()).map(|_| OnceLock::new()).collect();
        Ok(Self { plans, images, targets, counts })
    }

    pub fn params(state: usize) -> (f64, f64) {
        (CLIP_GRID[state / DISC_GRID.len()], DISC_GRID[state % DISC_GRID.len()])
    }

    pub fn state_of(clip_idx: usize, disc_idx: usize) -> usize {
        clip_idx * DISC_GRID.len() + disc_idx
    }

    /// Detection count of the plan at `state` on image `i`.
    pub fn count(&self, state: usize, i: usize) -> Result<usize> {
        self.counts[state * self.images.len() + i]
            .get_or_init(|| execute_plan(&self.plans[state], &self.images[i]).map(|r| r.count).map_err(|e| e.to_string()))
            .clone()
            .map_err(RlError::Env)
    }
}

impl Environment for UnsupervisedEnv {
    fn n_states(&self) -> usize {
        self.plans.len()
    }

    fn n_actions(&self) -> usize {
        9
    }

    fn step(&self, state: usize, action: usize) -> usize {
        let mv = |idx: usize, d: usize, len: usize| (idx + d).saturating_sub(1).min(len - 1);
        let (ci, di) = (state / DISC_GRID.len(), state % DISC_GRID.len());
        Self::state_of(mv(ci, action / 3, CLIP_GRID.len()), mv(di, action % 3, DISC_GRID.len()))
    }

    fn n_images(&self) -> usize {
        self.images.len()
    }

    fn reward(&self, state: usize, images: &[usize]) -> Result<f64> {
        let counts: Vec<Result<usize>> = images.par_iter().map(|&i| self.count(state, i)).collect();
        let mut total = 0.0;
        for (c, &i) in counts.into_iter().zip(images) {
            total += unsupervised_reward::<f64>(c?, self.targets[i] as usize);
        }
        Ok(total / images.len().max(1) as f64)
    }

    fn state_label(&self, state: usize) -> String {
        let (c, d) = Self::params(state);
        format!("{c:.1}/{d:.2}")
    }
}
