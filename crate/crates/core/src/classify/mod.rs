//! Knowledge-driven classifiers over rule-derived feature vectors.

mod metrics;
mod tree;

pub use metrics::{confusion_matrix, evaluate, Metrics, MetricsReport};
pub use tree::{Node, Tree};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive, stream};
use tree::{fit, Target, TreeParams};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("class {class} has {count} samples; stratification needs at least 3")]
    StratificationImpossible { class: usize, count: usize },
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("schema fingerprint {found} does not match model schema {expected}")]
    SchemaMismatch { expected: String, found: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ClassifyError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, ids: Vec<String>, n_classes: usize) -> Result<Self> {
        let ds = Self { features, labels, ids, n_classes };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.len();
        if self.labels.len() != n || self.ids.len() != n {
            return Err(ClassifyError::InvalidDataset(format!(
                "{} rows, {} labels, {} ids",
                n,
                self.labels.len(),
                self.ids.len()
            )));
        }
        if self.n_classes < 2 {
            return Err(ClassifyError::InvalidDataset("need at least 2 classes".into()));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= self.n_classes) {
            return Err(ClassifyError::InvalidDataset(format!("label {y} outside 0..{}", self.n_classes)));
        }
        let d = self.dim();
        if self.features.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
            return Err(ClassifyError::InvalidDataset("ragged or non-finite feature rows".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            n_classes: self.n_classes,
        }
    }
}

const SALT_SPLIT: u64 = 0x5911;

/// Per-class proportional split; leftover samples of a class go to distinct
/// splits chosen by a seeded draw. Each split keeps the original row order.
pub fn stratified_split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(ClassifyError::InvalidDataset(format!("fractions {fractions:?} must be positive and sum to 1")));
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    for c in 0..ds.n_classes {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            return Err(ClassifyError::StratificationImpossible { class: c, count: members.len() });
        }
        let mut rng = stream(derive(seed, SALT_SPLIT, c as u64));
        members.shuffle(&mut rng);
        let n = members.len();
        let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let left = n - counts.iter().sum::<usize>();
        let mut candidates: Vec<usize> = (0..3).filter(|&s| exact[s] > counts[s] as f64).collect();
        candidates.shuffle(&mut rng);
        for &s in candidates.iter().take(left) {
            counts[s] += 1;
        }
        let mut start = 0;
        for (s, &k) in counts.iter().enumerate() {
            parts[s].extend_from_slice(&members[start..start + k]);
            start += k;
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    Ok((ds.subset(&parts[0]), ds.subset(&parts[1]), ds.subset(&parts[2])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logreg,
    LinearSvm,
    Knn,
    RandomForest,
    GradientBoosting,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Logreg, ModelKind::LinearSvm, ModelKind::Knn, ModelKind::RandomForest, ModelKind::GradientBoosting];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logreg => "logreg",
            ModelKind::LinearSvm => "linear_svm",
            ModelKind::Knn => "knn",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosting => "gradient_boosting",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    pub seed: u64,
    pub logreg_lr: f64,
    pub logreg_l2: f64,
    pub logreg_epochs: u32,
    pub svm_lr: f64,
    pub svm_l2: f64,
    pub svm_epochs: u32,
    pub knn_k: usize,
    pub rf_trees: usize,
    pub rf_max_depth: u32,
    pub gb_rounds: usize,
    pub gb_max_depth: u32,
    pub gb_shrinkage: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            seed: 0,
            logreg_lr: 0.1,
            logreg_l2: 1e-4,
            logreg_epochs: 500,
            svm_lr: 0.01,
            svm_l2: 1e-4,
            svm_epochs: 50,
            knn_k: 5,
            rf_trees: 100,
            rf_max_depth: 8,
            gb_rounds: 100,
            gb_max_depth: 3,
            gb_shrinkage: 0.1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ClassifyError::InvalidHyperparams(m.to_string()));
        for (name, v) in [("logreg_lr", self.logreg_lr), ("svm_lr", self.svm_lr), ("gb_shrinkage", self.gb_shrinkage)] {
            if !(v > 0.0 && v <= 10.0) {
                return bad(&format!("{name} must be in (0, 10]"));
            }
        }
        if !(self.logreg_l2 >= 0.0 && self.svm_l2 >= 0.0) {
            return bad("L2 penalties must be >= 0");
        }
        if self.logreg_epochs == 0 || self.svm_epochs == 0 || self.knn_k == 0 || self.rf_trees == 0 || self.gb_rounds == 0 {
            return bad("epochs, k, tree and round counts must be >= 1");
        }
        if !(1..=32).contains(&self.rf_max_depth) || !(1..=32).contains(&self.gb_max_depth) {
            return bad("tree depths must be in 1..=32");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; zero spread maps to 1.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    /// `weights[c]` = bias followed by one weight per feature.
    Logreg { weights: Vec<Vec<f64>> },
    LinearSvm { weights: Vec<Vec<f64>> },
    Knn { k: usize, rows: Vec<Vec<f64>>, labels: Vec<usize> },
    RandomForest { trees: Vec<Tree> },
    /// One score ensemble per class.
    GradientBoosting { init: Vec<f64>, shrinkage: f64, trees: Vec<Vec<Tree>> },
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub schema_fingerprint: String,
    pub n_classes: usize,
    pub n_features: usize,
    pub standardizer: Standardizer,
    pub params: ModelParams,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn linear(w: &[f64], x: &[f64]) -> f64 {
    w[0] + w[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

/// Index of the largest value; the smallest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    (1..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

const SALT_SVM: u64 = 0x5f3;
const SALT_FOREST: u64 = 0xf0e5;

fn train_logreg(x: &[Vec<f64>], y: &[usize], c: usize, hp: &Hyperparams) -> Vec<Vec<f64>> {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut w = vec![vec![0.0; d + 1]; c];
    for _ in 0..hp.logreg_epochs {
        let mut grad = vec![vec![0.0; d + 1]; c];
        for (xi, &yi) in x.iter().zip(y) {
            let p = softmax(&w.iter().map(|wc| linear(wc, xi)).collect::<Vec<_>>());
            for k in 0..c {
                let g = p[k] - f64::from(u8::from(k == yi));
                grad[k][0] += g;
                for j in 0..d {
                    grad[k][j + 1] += g * xi[j];
                }
            }
        }
        for k in 0..c {
            for j in 0..=d {
                let reg = if j == 0 { 0.0 } else { hp.logreg_l2 * w[k][j] };
                w[k][j] -= hp.logreg_lr * (grad[k][j] / n + reg);
            }
        }
    }
    w
}

fn train_svm(x: &[Vec<f64>], y: &[usize], c: usize, hp: &Hyperparams) -> Vec<Vec<f64>> {
    let d = x[0].len();
    (0..c)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(derive(hp.seed, SALT_SVM, k as u64));
            let mut w = vec![0.0; d + 1];
            let mut order: Vec<usize> = (0..x.len()).collect();
            for _ in 0..hp.svm_epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    let t = if y[i] == k { 1.0 } else { -1.0 };
                    let margin = t * linear(&w, &x[i]);
                    for j in 1..=d {
                        w[j] -= hp.svm_lr * hp.svm_l2 * w[j];
                    }
                    if margin < 1.0 {
                        w[0] += hp.svm_lr * t;
                        for j in 0..d {
                            w[j + 1] += hp.svm_lr * t * x[i][j];
                        }
                    }
                }
            }
            w
        })
        .collect()
}

fn train_forest(x: &[Vec<f64>], y: &[usize], c: usize, hp: &Hyperparams) -> Vec<Tree> {
    let d = x[0].len();
    let params = TreeParams { max_depth: hp.rf_max_depth, max_features: Some(((d as f64).sqrt() as usize).max(1)) };
    (0..hp.rf_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(derive(hp.seed, SALT_FOREST, t as u64));
            let boot: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
            fit(x, &boot, Target::Class { labels: y, n_classes: c }, &params, Some(&mut rng))
        })
        .collect()
}

fn train_boosting(x: &[Vec<f64>], y: &[usize], c: usize, hp: &Hyperparams) -> (Vec<f64>, Vec<Vec<Tree>>) {
    let n = x.len();
    let params = TreeParams { max_depth: hp.gb_max_depth, max_features: None };
    let idx: Vec<usize> = (0..n).collect();
    let per_class: Vec<(f64, Vec<Tree>)> = (0..c)
        .into_par_iter()
        .map(|k| {
            let t: Vec<f64> = y.iter().map(|&yi| f64::from(u8::from(yi == k))).collect();
            let prior = (t.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
            let init = (prior / (1.0 - prior)).ln();
            let mut f = vec![init; n];
            let mut trees = Vec::with_capacity(hp.gb_rounds);
            for _ in 0..hp.gb_rounds {
                let p: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
                let residual: Vec<f64> = t.iter().zip(&p).map(|(t, p)| t - p).collect();
                let hessian: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
                let tree = fit(x, &idx, Target::Newton { residual: &residual, hessian: &hessian }, &params, None);
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi += hp.gb_shrinkage * tree.leaf(&x[i])[0];
                }
                trees.push(tree);
            }
            (init, trees)
        })
        .collect();
    per_class.into_iter().unzip()
}

/// Trains `kind` on `ds`; features are standardized with training-set
/// statistics for every kind.
pub fn train(kind: ModelKind, ds: &Dataset, hp: &Hyperparams, schema_fingerprint: &str) -> Result<TrainedModel> {
    ds.validate()?;
    hp.validate()?;
    if ds.is_empty() || ds.dim() == 0 {
        return Err(ClassifyError::InvalidDataset("empty dataset".into()));
    }
    if ds.labels.iter().all(|&y| y == ds.labels[0]) {
        return Err(ClassifyError::DegenerateLabels);
    }
    let standardizer = Standardizer::fit(&ds.features);
    let x: Vec<Vec<f64>> = ds.features.iter().map(|r| standardizer.apply(r)).collect();
    let (y, c) = (&ds.labels[..], ds.n_classes);
    let params = match kind {
        ModelKind::Logreg => ModelParams::Logreg { weights: train_logreg(&x, y, c, hp) },
        ModelKind::LinearSvm => ModelParams::LinearSvm { weights: train_svm(&x, y, c, hp) },
        ModelKind::Knn => ModelParams::Knn { k: hp.knn_k.min(x.len()), rows: x, labels: y.to_vec() },
        ModelKind::RandomForest => ModelParams::RandomForest { trees: train_forest(&x, y, c, hp) },
        ModelKind::GradientBoosting => {
            let (init, trees) = train_boosting(&x, y, c, hp);
            ModelParams::GradientBoosting { init, shrinkage: hp.gb_shrinkage, trees }
        }
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        schema_fingerprint: schema_fingerprint.to_string(),
        n_classes: c,
        n_features: ds.dim(),
        standardizer,
        params,
    })
}

impl TrainedModel {
    fn check(&self, fingerprint: &str, x: &[f64]) -> Result<()> {
        if fingerprint != self.schema_fingerprint {
            return Err(ClassifyError::SchemaMismatch { expected: self.schema_fingerprint.clone(), found: fingerprint.into() });
        }
        if x.len() != self.n_features {
            return Err(ClassifyError::InvalidDataset(format!("vector has {} features, model expects {}", x.len(), self.n_features)));
        }
        Ok(())
    }

    /// Class probabilities for one feature vector built under `fingerprint`.
    pub fn predict_proba(&self, fingerprint: &str, x: &[f64]) -> Result<Vec<f64>> {
        self.check(fingerprint, x)?;
        let z = self.standardizer.apply(x);
        let c = self.n_classes;
        Ok(match &self.params {
            ModelParams::Logreg { weights } | ModelParams::LinearSvm { weights } => {
                softmax(&weights.iter().map(|w| linear(w, &z)).collect::<Vec<_>>())
            }
            ModelParams::Knn { k, rows, labels } => {
                let mut dist: Vec<(f64, usize)> = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (r.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
                    .collect();
                dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut votes = vec![0.0; c];
                for &(_, i) in dist.iter().take(*k) {
                    votes[labels[i]] += 1.0;
                }
                votes.iter().map(|v| v / *k as f64).collect()
            }
            ModelParams::RandomForest { trees } => {
                let mut votes = vec![0.0; c];
                for t in trees {
                    votes[argmax(t.leaf(&z))] += 1.0;
                }
                votes.iter().map(|v| v / trees.len() as f64).collect()
            }
            ModelParams::GradientBoosting { init, shrinkage, trees } => {
                let p: Vec<f64> = (0..c)
                    .map(|k| sigmoid(init[k] + shrinkage * trees[k].iter().map(|t| t.leaf(&z)[0]).sum::<f64>()))
                    .collect();
                let s: f64 = p.iter().sum();
                p.iter().map(|v| v / s).collect()
            }
        })
    }

    /// Most probable class; ties go to the smaller class id.
    pub fn predict(&self, fingerprint: &str, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(fingerprint, x)?))
    }

    pub fn predict_all(&self, fingerprint: &str, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        rows.par_iter().map(|r| self.predict(fingerprint, r)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(ClassifyError::InvalidDataset(format!("unsupported model format {}", m.format_version)));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = stream(seed);
        let mut x = vec![];
        let mut y = vec![];
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { -3.0 } else { 3.0 };
            x.push(vec![centre + rng.random_range(-1.5..1.5), centre + rng.random_range(-2.0..2.0)]);
            y.push(c);
        }
        Dataset::new(x, y, (0..n).map(|i| format!("s{i}")).collect(), 2).unwrap()
    }

    fn xor(n: usize, seed: u64) -> Dataset {
        let mut rng = stream(seed);
        let mut x = vec![];
        let mut y = vec![];
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            if a.abs() < 0.05 || b.abs() < 0.05 {
                continue;
            }
            y.push(usize::from((a > 0.0) != (b > 0.0)));
            x.push(vec![a, b]);
        }
        let n = y.len();
        Dataset::new(x, y, (0..n).map(|i| format!("s{i}")).collect(), 2).unwrap()
    }

    fn accuracy(m: &TrainedModel, ds: &Dataset) -> f64 {
        let p = m.predict_all("fp", &ds.features).unwrap();
        evaluate::<f64>(&p, &ds.labels, ds.n_classes).unwrap().accuracy
    }

    #[test]
    fn split_counts() {
        let ds = blobs(100, 1);
        let (a, b, c) = stratified_split(&ds, [0.6, 0.2, 0.2], 3).unwrap();
        for part in [&a, &b, &c] {
            let ones = part.labels.iter().filter(|&&y| y == 1).count();
            assert_eq!(ones * 2, part.len());
        }
        assert_eq!((a.len(), b.len(), c.len()), (60, 20, 20));
        assert_eq!(stratified_split(&ds, [0.6, 0.2, 0.2], 3).unwrap().1, b);
        let tiny = ds.subset(&[0, 1, 2, 4]);
        assert!(matches!(stratified_split(&tiny, [0.6, 0.2, 0.2], 0), Err(ClassifyError::StratificationImpossible { class: 1, count: 1 })));
    }

    #[test]
    fn separable_blobs() {
        let (train_set, test_set) = (blobs(200, 1), blobs(100, 2));
        for kind in ModelKind::ALL {
            let m = train(kind, &train_set, &Hyperparams::default(), "fp").unwrap();
            assert!(accuracy(&m, &test_set) >= 0.95, "{kind:?}");
        }
    }

    #[test]
    fn xor_needs_trees() {
        let (train_set, test_set) = (xor(400, 3), xor(200, 4));
        let gb = train(ModelKind::GradientBoosting, &train_set, &Hyperparams::default(), "fp").unwrap();
        let lr = train(ModelKind::Logreg, &train_set, &Hyperparams::default(), "fp").unwrap();
        assert!(accuracy(&gb, &test_set) >= 0.95);
        assert!(accuracy(&lr, &test_set) <= 0.6);
    }

    #[test]
    fn degenerate_and_schema() {
        let mut ds = blobs(10, 1);
        ds.labels = vec![0; 10];
        assert!(matches!(train(ModelKind::Knn, &ds, &Hyperparams::default(), "fp"), Err(ClassifyError::DegenerateLabels)));
        let m = train(ModelKind::Knn, &blobs(10, 1), &Hyperparams::default(), "fp").unwrap();
        assert!(matches!(m.predict_proba("other", &[0.0, 0.0]), Err(ClassifyError::SchemaMismatch { .. })));
    }

    #[test]
    fn proba_examples() {
        let ds = blobs(40, 1);
        let m = train(ModelKind::Knn, &ds, &Hyperparams::default(), "fp").unwrap();
        assert_eq!(m.predict_proba("fp", &[3.0, 3.0]).unwrap(), vec![0.0, 1.0]);
        let mut lr = train(ModelKind::Logreg, &ds, &Hyperparams { logreg_epochs: 1, ..Hyperparams::default() }, "fp").unwrap();
        lr.params = ModelParams::Logreg { weights: vec![vec![0.0; 3]; 2] };
        assert_eq!(lr.predict_proba("fp", &[1.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        let rf = train(ModelKind::RandomForest, &ds, &Hyperparams::default(), "fp").unwrap();
        assert_eq!(rf.predict_proba("fp", &[-3.0, -3.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn deterministic_and_serializable() {
        let ds = xor(200, 5);
        for kind in [ModelKind::RandomForest, ModelKind::LinearSvm, ModelKind::GradientBoosting] {
            let a = train(kind, &ds, &Hyperparams::default(), "fp").unwrap();
            let b = train(kind, &ds, &Hyperparams::default(), "fp").unwrap();
            assert_eq!(a, b);
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.json");
            a.save(&p).unwrap();
            assert_eq!(TrainedModel::load(&p).unwrap(), a);
        }
    }
}
