//! Tabular Q-learning for detector-threshold and plan-parameter tuning.

mod env;

pub use env::{SupervisedEnv, SupervisedImage, UnsupervisedEnv, CLIP_GRID, DISC_GRID, THRESHOLD_GRID};

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{greedy_match, Box};
use crate::rng::{derive, stream};
use crate::scalar::{Field, Real};
use crate::synth::ScoredDetection;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("environment has no images")]
    EmptyDataset,
    #[error("environment: {0}")]
    Env(String),
    #[error("line {line}: {message}")]
    Interchange { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, RlError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Defaults to half of `episodes`.
    pub epsilon_decay_episodes: Option<u32>,
    pub episodes: u32,
    pub steps_per_episode: u32,
    pub minibatch: usize,
    pub seed: u64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: None,
            episodes: 500,
            steps_per_episode: 20,
            minibatch: 8,
            seed: 0,
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in [0, 1)");
        }
        if self.episodes == 0 {
            return bad("episodes must be >= 1");
        }
        if self.steps_per_episode == 0 || self.minibatch == 0 {
            return bad("steps_per_episode and minibatch must be >= 1");
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilon values must be in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: u32) -> f64 {
        let decay = self.epsilon_decay_episodes.unwrap_or(self.episodes / 2).max(1);
        if episode >= decay {
            return self.epsilon_end;
        }
        let f = episode as f64 / decay as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f
    }
}

/// A finite grid environment. States and actions are dense indices;
/// state order is the grid order used for tie-breaking.
pub trait Environment: Sync {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Next state, clamped to the grid.
    fn step(&self, state: usize, action: usize) -> usize;
    fn n_images(&self) -> usize;
    /// Mean reward of `state` over the given image indices.
    fn reward(&self, state: usize, images: &[usize]) -> Result<f64>;
    fn state_label(&self, state: usize) -> String;
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    n_states: usize,
    n_actions: usize,
    values: Vec<T>,
    visits: Vec<u64>,
}

impl<T: Real> QTable<T> {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, values: vec![T::zero(); n_states * n_actions], visits: vec![0; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> T {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: T) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn max_q(&self, s: usize) -> T {
        self.row(s).iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Best action in `s`; the lowest index wins ties.
    pub fn best_action(&self, s: usize) -> usize {
        let row = self.row(s);
        (1..row.len()).fold(0, |b, a| if row[a] > row[b] { a } else { b })
    }
}

/// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`
pub fn q_update<T: Real>(table: &mut QTable<T>, s: usize, a: usize, r: T, s_next: usize, alpha: T, gamma: T) {
    let q = table.get(s, a);
    let target = r + gamma * table.max_q(s_next);
    table.set(s, a, q + alpha * (target - q));
    table.visits[s * table.n_actions + a] += 1;
}

/// State with the highest max-action value; the earliest state wins ties.
pub fn greedy_param<T: Real>(table: &QTable<T>) -> usize {
    (1..table.n_states).fold(0, |b, s| if table.max_q(s) > table.max_q(b) { s } else { b })
}

/// IoU reward of the detections kept at `threshold`: matched IoU summed over
/// greedy one-to-one matches, divided by the truth count plus the number of
/// kept detections left unmatched. No truth and nothing kept scores 1.
pub fn supervised_reward<T: Field>(detections: &[(Box, f64)], truth: &[Box], threshold: f64) -> T {
    let kept: Vec<Box> = detections.iter().filter(|d| d.1 >= threshold).map(|d| d.0).collect();
    if truth.is_empty() && kept.is_empty() {
        return T::one();
    }
    let matches = greedy_match::<T>(&kept, truth);
    let total = matches.iter().fold(T::zero(), |acc, m| acc + m.2);
    let unmatched = kept.len() - matches.len();
    total / T::from_count(truth.len() + unmatched)
}

pub fn unsupervised_reward<T: Field>(n_detected: usize, n_target: usize) -> T {
    let err = n_detected.abs_diff(n_target);
    let denom = n_target.max(1);
    if err >= denom {
        return T::zero();
    }
    T::one() - T::from_count(err) / T::from_count(denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u32,
    pub epsilon: f64,
    pub mean_reward: f64,
    pub greedy_state: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub records: Vec<EpisodeRecord>,
}

impl EpisodeLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

const SALT_TRAIN: u64 = 0x7a1e;

/// Epsilon-greedy tabular Q-learning; reproducible from `config.seed`.
pub fn train_agent<T: Real, E: Environment>(env: &E, config: &QConfig) -> Result<(QTable<T>, EpisodeLog)> {
    config.validate()?;
    let n_img = env.n_images();
    if n_img == 0 {
        return Err(RlError::EmptyDataset);
    }
    let batch = config.minibatch.min(n_img);
    let (alpha, gamma) = (T::from_f64_lossy(config.alpha), T::from_f64_lossy(config.gamma));
    let mut table = QTable::<T>::new(env.n_states(), env.n_actions());
    let mut log = EpisodeLog::default();
    let mut rng = stream(derive(config.seed, SALT_TRAIN, 0));
    for episode in 0..config.episodes {
        let eps = config.epsilon(episode);
        let mut s = rng.random_range(0..env.n_states());
        let mut total = 0.0;
        for _ in 0..config.steps_per_episode {
            let a = if rng.random_bool(eps) { rng.random_range(0..env.n_actions()) } else { table.best_action(s) };
            let next = env.step(s, a);
            let mut images = sample(&mut rng, n_img, batch).into_vec();
            images.sort_unstable();
            let r = env.reward(next, &images)?;
            total += r;
            q_update(&mut table, s, a, T::from_f64_lossy(r), next, alpha, gamma);
            s = next;
        }
        log.records.push(EpisodeRecord {
            episode,
            epsilon: eps,
            mean_reward: total / config.steps_per_episode as f64,
            greedy_state: env.state_label(greedy_param(&table)),
        });
    }
    Ok((table, log))
}

/// Mean reward of every state over every image, in grid order.
pub fn sweep<E: Environment>(env: &E) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..env.n_images()).collect();
    (0..env.n_states()).map(|s| env.reward(s, &all)).collect()
}

pub fn write_scored_jsonl(w: &mut impl Write, detections: &[ScoredDetection]) -> Result<()> {
    for d in detections {
        serde_json::to_writer(&mut *w, d).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_scored_jsonl(r: impl BufRead) -> Result<Vec<ScoredDetection>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: ScoredDetection = serde_json::from_str(&line)
            .map_err(|e| RlError::Interchange { line: i + 1, message: e.to_string() })?;
        if !d.score.is_finite() || d.bbox.x1 <= d.bbox.x0 || d.bbox.y1 <= d.bbox.y0 {
            return Err(RlError::Interchange { line: i + 1, message: "degenerate box or non-finite score".into() });
        }
        out.push(d);
    }
    Ok(out)
}
