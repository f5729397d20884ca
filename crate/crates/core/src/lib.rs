//! Knowledge-guided lesion feature extraction for retinal fundus images:
//! imaging primitives, a typed extraction-plan language, rule bases, an LLM
//! bridge, self-verification, Q-learning tuning, classifiers and fusion.

pub mod assets;
pub mod classify;
pub mod fusion;
pub mod imaging;
pub mod llm;
pub mod plan;
pub mod rl;
pub mod rng;
pub mod rules;
pub mod scalar;
pub mod synth;
pub mod verify;

pub use scalar::{Field, Real};

/// Exact rational scalar used by the metric and IoU oracles.
pub type Exact = num_rational::Ratio<i64>;

pub type QTable = rl::QTable<f64>;
pub type QTable32 = rl::QTable<f32>;
pub type Metrics = classify::Metrics<f64>;
pub type ExactMetrics = classify::Metrics<Exact>;
