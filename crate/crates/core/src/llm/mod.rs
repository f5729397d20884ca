//! The three-prompt sequence (consolidate, generate, refine) over a
//! pluggable chat backend. Every backend reply passes through the plan or
//! rule-base parser before it reaches a caller.

mod mock;
mod prompts;
mod remote;

pub use mock::{MockBackend, RefinePolicy};
pub use remote::RemoteBackend;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::plan::{parse_plan, serialize_plan, ClampFlag, ExtractionPlan};
use crate::rules::{load_rulebase, ClinicalRule, Passage, RuleBase, RuleKind};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("gave up after {attempts} attempts; last error: {last_error}")]
    RetriesExhausted { attempts: u32, last_error: String },
    #[error("rule `{0}` is not a visual rule")]
    WrongRuleTarget(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend: {0}")]
    Backend(String),
}

pub type Result<T> = std::result::Result<T, BridgeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
    /// Recorded transcript played back in order.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BridgeConfig {
    pub backend: BackendKind,
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env: String,
    pub max_retries: u32,
    pub temperature: f64,
    pub seed: u64,
    /// Transcript file read by the replay backend.
    pub transcript_path: String,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            endpoint_url: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model_name: "gpt-4o-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 3,
            temperature: 0.0,
            seed: 0,
            transcript_path: String::new(),
        }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_retries == 0 {
            return Err(BridgeError::InvalidRequest("max_retries must be >= 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BridgeError::InvalidRequest("temperature must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Consolidate,
    Generate,
    Refine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

/// A chat completion request. `payload` carries the structured inputs the
/// prompt was rendered from; remote backends ignore it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub kind: PromptKind,
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    #[serde(skip)]
    pub payload: Value,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub kind: PromptKind,
    pub attempt: u32,
    pub request: Vec<ChatMessage>,
    pub response: Option<String>,
    pub verdict: String,
}

/// Metrics sent back with Prompt 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementFeedback {
    pub per_image_scores: Vec<f64>,
    pub entropic_gain: f64,
    pub mean_score: f64,
    pub iou_mean: f64,
    pub iou_min: f64,
    pub precision: f64,
    pub recall: f64,
    /// Mean of (detected - expected) counts; its sign says which way to move.
    pub count_bias: f64,
    pub clamp_flags: Vec<ClampFlag>,
}

/// Anything that can propose the next plan version.
pub trait Refiner {
    fn refine(&self, plan: &ExtractionPlan, feedback: &RefinementFeedback) -> Result<ExtractionPlan>;
}

/// Pulls the JSON object out of a reply that may wrap it in prose or fences.
pub fn extract_json(reply: &str) -> &str {
    let body = match reply.find("```") {
        Some(start) => {
            let after = &reply[start + 3..];
            let after = after.find('\n').map_or(after, |nl| &after[nl + 1..]);
            after.find("```").map_or(after, |end| &after[..end])
        }
        None => reply,
    };
    match (body.find('{'), body.rfind('}')) {
        (Some(a), Some(b)) if a < b => &body[a..=b],
        _ => body.trim(),
    }
}

pub struct LlmBridge {
    backend: Box<dyn ChatBackend>,
    config: BridgeConfig,
    transcript: Mutex<Vec<TranscriptEntry>>,
}

impl LlmBridge {
    pub fn new(backend: Box<dyn ChatBackend>, config: BridgeConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { backend, config, transcript: Mutex::new(Vec::new()) })
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.config
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript.lock().expect("transcript lock").clone()
    }

    /// Transcript as line-delimited JSON.
    pub fn transcript_jsonl(&self) -> String {
        self.transcript()
            .iter()
            .map(|e| serde_json::to_string(e).expect("transcript serializes") + "\n")
            .collect()
    }

    /// Sends `prompt`, validating each reply with `accept`; a rejected reply
    /// is appended to the conversation with the validator's message.
    fn converse<T>(
        &self,
        kind: PromptKind,
        prompt: String,
        payload: Value,
        accept: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<T> {
        let mut messages = vec![ChatMessage::user(prompt)];
        let mut last_error = String::new();
        for attempt in 1..=self.config.max_retries {
            let request = ChatRequest {
                kind,
                model: self.config.model_name.clone(),
                temperature: self.config.temperature,
                messages: messages.clone(),
                payload: payload.clone(),
            };
            let reply = self.backend.complete(&request);
            let (verdict, outcome) = match &reply {
                Ok(text) => match accept(extract_json(text)) {
                    Ok(v) => ("ok".to_string(), Some(v)),
                    Err(e) => (format!("rejected: {e}"), None),
                },
                Err(e) => (format!("backend error: {e}"), None),
            };
            log::debug!("{kind:?} attempt {attempt}: {verdict}");
            self.transcript.lock().expect("transcript lock").push(TranscriptEntry {
                kind,
                attempt,
                request: messages.clone(),
                response: reply.as_ref().ok().cloned(),
                verdict: verdict.clone(),
            });
            if let Some(v) = outcome {
                return Ok(v);
            }
            last_error = verdict;
            if let Ok(text) = reply {
                messages.push(ChatMessage::assistant(text));
                messages.push(ChatMessage::user(prompts::retry(&last_error)));
            }
        }
        Err(BridgeError::RetriesExhausted { attempts: self.config.max_retries, last_error })
    }

    /// Prompt 1.
    pub fn consolidate_rules(&self, disease: &str, passages: &[Passage]) -> Result<RuleBase> {
        if passages.is_empty() {
            return Err(BridgeError::InvalidRequest("at least one passage required".into()));
        }
        let payload = json!({ "disease": disease, "passages": passages });
        self.converse(PromptKind::Consolidate, prompts::consolidate(disease, passages), payload, |text| {
            load_rulebase(text).map_err(|e| e.to_string())
        })
    }

    /// Prompt 2.
    pub fn generate_plan(&self, rule: &ClinicalRule) -> Result<ExtractionPlan> {
        if rule.kind != RuleKind::Visual {
            return Err(BridgeError::WrongRuleTarget(rule.rule_id.clone()));
        }
        let payload = json!({ "rule": rule });
        self.converse(PromptKind::Generate, prompts::generate(rule), payload, |text| {
            let plan = parse_plan(text).map_err(|e| e.to_string())?;
            if plan.rule_id != rule.rule_id {
                return Err(format!("plan targets rule `{}`, expected `{}`", plan.rule_id, rule.rule_id));
            }
            Ok(plan)
        })
    }

    /// Prompt 3.
    pub fn refine_plan(&self, plan: &ExtractionPlan, feedback: &RefinementFeedback) -> Result<ExtractionPlan> {
        if feedback.per_image_scores.is_empty() {
            return Err(BridgeError::InvalidRequest("feedback has no scores".into()));
        }
        plan.validate().map_err(|e| BridgeError::InvalidRequest(e.to_string()))?;
        let text = serialize_plan(plan);
        let payload = json!({ "plan": text, "feedback": feedback });
        self.converse(PromptKind::Refine, prompts::refine(&text, feedback), payload, |reply| {
            let next = parse_plan(reply).map_err(|e| e.to_string())?;
            if next.rule_id != plan.rule_id {
                return Err(format!("plan targets rule `{}`, expected `{}`", next.rule_id, plan.rule_id));
            }
            Ok(next)
        })
    }
}

impl Refiner for LlmBridge {
    fn refine(&self, plan: &ExtractionPlan, feedback: &RefinementFeedback) -> Result<ExtractionPlan> {
        self.refine_plan(plan, feedback)
    }
}

/// Answers each request with the next recorded reply of the same prompt
/// kind; a recorded backend failure is replayed as a failure.
pub struct ReplayBackend {
    entries: Mutex<std::collections::VecDeque<TranscriptEntry>>,
}

impl ReplayBackend {
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| BridgeError::InvalidRequest(format!("transcript: {e}"))))
            .collect::<Result<_>>()?;
        Ok(Self { entries: Mutex::new(entries) })
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let entry = self
            .entries
            .lock()
            .expect("replay lock")
            .pop_front()
            .ok_or_else(|| BridgeError::Backend("transcript exhausted".into()))?;
        if entry.kind != request.kind {
            return Err(BridgeError::Backend(format!("transcript has {:?} where {:?} was requested", entry.kind, request.kind)));
        }
        entry.response.ok_or_else(|| BridgeError::Backend(entry.verdict.trim_start_matches("backend error: ").to_string()))
    }
}

/// Builds the backend selected by `config`.
pub fn backend_from_config(config: &BridgeConfig) -> Result<Box<dyn ChatBackend>> {
    Ok(match config.backend {
        BackendKind::Mock => Box::new(MockBackend::dr(config.seed)),
        BackendKind::Remote => Box::new(RemoteBackend::from_config(config)?),
        BackendKind::Replay => {
            let text = std::fs::read_to_string(&config.transcript_path)
                .map_err(|e| BridgeError::InvalidRequest(format!("{}: {e}", config.transcript_path)))?;
            Box::new(ReplayBackend::from_jsonl(&text)?)
        }
    })
}
