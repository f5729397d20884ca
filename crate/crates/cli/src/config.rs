use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use kgx_core::classify::{Hyperparams, ModelKind};
use kgx_core::llm::{BackendKind, BridgeConfig, RefinePolicy};
use kgx_core::rl::QConfig;
use kgx_core::synth::{DetectionNoise, GradeMix};
use kgx_core::verify::{Regime, VerificationConfig};

use crate::Invalid;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub rulebase: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    /// Directory of `<rule_id>.json` plans.
    pub plans: Option<PathBuf>,
    /// Single plan for `verify` and unsupervised `tune`.
    pub plan: Option<PathBuf>,
    /// Slot bindings applied on top of plan defaults.
    pub bindings: Option<PathBuf>,
    /// Scored detections (JSONL) for supervised tuning.
    pub detections: Option<PathBuf>,
    /// External deep-model predictions (JSONL).
    pub predictions: Option<PathBuf>,
    pub kd_outputs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub n: usize,
    pub size: u32,
    pub grade_mix: GradeMix,
    pub noise_sigma_milli: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { n: 500, size: 512, grade_mix: GradeMix::uniform(), noise_sigma_milli: 3000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RulesConfig {
    pub disease: String,
    pub query: String,
    pub top_k: usize,
}

impl Default for RulesConfig {
    fn default() -> Self {
        Self {
            disease: "diabetic retinopathy".into(),
            query: "diabetic retinopathy lesions exudates hemorrhages microaneurysms cotton wool spots optic disc risk factors"
                .into(),
            top_k: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockPolicy {
    Monotone,
    Identity,
}

impl From<MockPolicy> for RefinePolicy {
    fn from(p: MockPolicy) -> Self {
        match p {
            MockPolicy::Monotone => RefinePolicy::Monotone,
            MockPolicy::Identity => RefinePolicy::Identity,
        }
    }
}

/// Where unsupervised count targets come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSource {
    /// Planted counts from the truth sidecars.
    Truth,
    /// Midpoint of the rule base's expected range for the image's grade.
    Rulebase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyCmdConfig {
    #[serde(rename = "loop")]
    pub loop_config: VerificationConfig,
    pub k: usize,
    pub mock_policy: MockPolicy,
    pub targets: TargetSource,
}

impl Default for VerifyCmdConfig {
    fn default() -> Self {
        Self { loop_config: VerificationConfig::default(), k: 8, mock_policy: MockPolicy::Monotone, targets: TargetSource::Truth }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    pub regime: Regime,
    pub q: QConfig,
    /// Images used by the unsupervised environment.
    pub images: usize,
    pub targets: TargetSource,
    /// Detector simulation used when no detections file is given.
    pub noise: DetectionNoise,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Supervised,
            q: QConfig::default(),
            images: 16,
            targets: TargetSource::Truth,
            noise: DetectionNoise::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub fractions: [f64; 3],
    pub shuffle_labels: bool,
    pub iou_min: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::GradientBoosting,
            hyperparams: Hyperparams::default(),
            fractions: [0.6, 0.2, 0.2],
            shuffle_labels: false,
            iou_min: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionSplit {
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub enabled: bool,
    pub split: FusionSplit,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { enabled: true, split: FusionSplit::Test }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub data: DataConfig,
    pub rules: RulesConfig,
    pub bridge: BridgeConfig,
    pub verify: VerifyCmdConfig,
    pub tune: TuneConfig,
    pub classifier: ClassifierConfig,
    pub fusion: FusionConfig,
}

impl PipelineConfig {
    /// Reads a config file, or the config snapshot of a run manifest. A
    /// manifest recorded with a remote backend replays its transcript.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        let is_manifest = value.get("run_id").is_some() && value.get("config").is_some();
        let body = if is_manifest { value["config"].clone() } else { value };
        let mut cfg: PipelineConfig =
            serde_json::from_value(body).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        if is_manifest && cfg.bridge.backend == BackendKind::Remote {
            let dir = path.parent().unwrap_or(Path::new("."));
            cfg.bridge.backend = BackendKind::Replay;
            cfg.bridge.transcript_path = dir.join("transcript.jsonl").display().to_string();
        }
        Ok(cfg)
    }

    /// Every module seed follows the root seed.
    pub fn propagate_seed(&mut self) {
        self.tune.q.seed = self.seed;
        self.classifier.hyperparams.seed = self.seed;
        self.bridge.seed = self.seed;
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.bridge.validate().map_err(|e| Invalid(e.to_string()))?;
        self.tune.q.validate().map_err(|e| Invalid(e.to_string()))?;
        self.classifier.hyperparams.validate().map_err(|e| Invalid(e.to_string()))?;
        self.data.grade_mix.validate().map_err(|e| Invalid(e.to_string()))?;
        let fail = |m: &str| Err(Invalid(m.to_string()).into());
        if self.data.n == 0 {
            return fail("data.n must be >= 1");
        }
        if self.verify.k < 2 {
            return fail("verify.k must be >= 2");
        }
        if self.verify.loop_config.max_iterations == 0 {
            return fail("verify.loop.max_iterations must be >= 1");
        }
        if self.verify.loop_config.tau.is_some_and(|t| !t.is_finite()) {
            return fail("verify.loop.tau must be finite");
        }
        if self.tune.images == 0 {
            return fail("tune.images must be >= 1");
        }
        if self.rules.top_k == 0 {
            return fail("rules.top_k must be >= 1");
        }
        if !(self.classifier.iou_min > 0.0 && self.classifier.iou_min <= 1.0) {
            return fail("classifier.iou_min must be in (0, 1]");
        }
        Ok(())
    }
}
