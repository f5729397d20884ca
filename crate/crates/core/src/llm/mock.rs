use std::collections::BTreeMap;
use std::sync::Mutex;

use serde_json::Value;

use super::{BridgeError, ChatBackend, ChatRequest, PromptKind, RefinementFeedback, Result};
use crate::assets;
use crate::plan::{parse_plan, serialize_plan, ArgValue, ExtractionPlan, Op};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinePolicy {
    /// Clamp flags first, else move the area filter against the count error.
    Monotone,
    /// Echo the plan back unchanged.
    Identity,
}

/// Deterministic fixture backend.
pub struct MockBackend {
    rulebase: String,
    plans: BTreeMap<String, String>,
    policy: RefinePolicy,
    failures_left: Mutex<u64>,
    seed: u64,
}

const MALFORMED: &str = "I think the plan should threshold the image { not json";

impl MockBackend {
    /// Bundled DR rule base and reference plans.
    pub fn dr(seed: u64) -> Self {
        Self {
            rulebase: assets::DR_RULEBASE.to_string(),
            plans: assets::REFERENCE_PLANS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            policy: RefinePolicy::Monotone,
            failures_left: Mutex::new(0),
            seed,
        }
    }

    pub fn with_policy(mut self, policy: RefinePolicy) -> Self {
        self.policy = policy;
        self
    }

    /// The next `n` replies are malformed; `u64::MAX` means always.
    pub fn with_failures(self, n: u64) -> Self {
        *self.failures_left.lock().expect("mock lock") = n;
        self
    }

    pub fn with_plan(mut self, rule_id: &str, text: &str) -> Self {
        self.plans.insert(rule_id.to_string(), text.to_string());
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn refine(&self, payload: &Value) -> Result<String> {
        let text = payload["plan"].as_str().ok_or_else(|| BridgeError::Backend("refine payload lacks plan".into()))?;
        let feedback: RefinementFeedback = serde_json::from_value(payload["feedback"].clone())
            .map_err(|e| BridgeError::Backend(format!("refine payload: {e}")))?;
        let plan = parse_plan(text).map_err(|e| BridgeError::Backend(e.to_string()))?;
        let next = match self.policy {
            RefinePolicy::Identity => plan,
            RefinePolicy::Monotone => monotone_step(plan, &feedback),
        };
        Ok(serialize_plan(&next))
    }
}

/// Slot bound to the `min_area` of the last area filter, if any.
fn area_slot(plan: &ExtractionPlan) -> Option<String> {
    plan.steps.iter().rev().filter(|s| s.op == Op::FilterRegions).find_map(|s| match s.args.get("min_area") {
        Some(ArgValue::Slot(name)) => Some(name.clone()),
        _ => None,
    })
}

fn monotone_step(mut plan: ExtractionPlan, fb: &RefinementFeedback) -> ExtractionPlan {
    if fb.mean_score >= 1.0 {
        return plan;
    }
    if let Some(flag) = fb.clamp_flags.first() {
        if let Some(spec) = plan.params.get_mut(&flag.slot) {
            if flag.requested > spec.max {
                spec.max += spec.grid_step;
                spec.default = spec.max;
            } else if flag.requested < spec.min {
                spec.min -= spec.grid_step;
                spec.default = spec.min;
            }
            return plan;
        }
    }
    let Some(slot) = area_slot(&plan) else { return plan };
    let spec = plan.params.get_mut(&slot).expect("validated plan binds its slots");
    let moved = if fb.count_bias > 0.0 {
        spec.default + spec.grid_step
    } else if fb.count_bias < 0.0 {
        spec.default - spec.grid_step
    } else {
        spec.default
    };
    spec.default = moved.clamp(spec.min, spec.max);
    plan
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        {
            let mut left = self.failures_left.lock().expect("mock lock");
            if *left > 0 {
                if *left != u64::MAX {
                    *left -= 1;
                }
                return Ok(MALFORMED.to_string());
            }
        }
        match request.kind {
            PromptKind::Consolidate => Ok(self.rulebase.clone()),
            PromptKind::Generate => {
                let rule = &request.payload["rule"];
                let id = rule["rule_id"].as_str().unwrap_or_default();
                let name = rule["name"].as_str().unwrap_or_default();
                Ok(self
                    .plans
                    .get(id)
                    .or_else(|| self.plans.get(name))
                    .cloned()
                    .unwrap_or_else(|| format!("No reference plan is known for rule `{id}`.")))
            }
            PromptKind::Refine => self.refine(&request.payload),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{BridgeConfig, LlmBridge};
    use crate::plan::ClampFlag;
    use crate::rules::{load_rulebase, Corpus};

    fn feedback(mean: f64, bias: f64) -> RefinementFeedback {
        RefinementFeedback {
            per_image_scores: vec![mean; 4],
            entropic_gain: 4f64.ln(),
            mean_score: mean,
            iou_mean: mean,
            iou_min: mean,
            precision: 1.0,
            recall: mean,
            count_bias: bias,
            clamp_flags: vec![],
        }
    }

    fn bridge(mock: MockBackend, retries: u32) -> LlmBridge {
        LlmBridge::new(Box::new(mock), BridgeConfig { max_retries: retries, ..BridgeConfig::default() }).unwrap()
    }

    fn passages() -> Vec<crate::rules::Passage> {
        Corpus::new(assets::CORPUS).unwrap().retrieve("diabetic retinopathy lesions", 4).unwrap()
    }

    #[test]
    fn consolidate_returns_bundled_rulebase() {
        let rb = bridge(MockBackend::dr(0), 3).consolidate_rules("diabetic retinopathy", &passages()).unwrap();
        assert_eq!(rb, load_rulebase(assets::DR_RULEBASE).unwrap());
        assert_eq!(rb.rules.len(), 7);
    }

    #[test]
    fn two_failures_then_success() {
        let b = bridge(MockBackend::dr(0).with_failures(2), 3);
        b.consolidate_rules("dr", &passages()).unwrap();
        let t = b.transcript();
        assert_eq!(t.len(), 3);
        assert!(t[0].verdict.starts_with("rejected"));
        assert_eq!(t[2].verdict, "ok");
        // the validator's message is fed back
        assert!(t[1].request.last().unwrap().content.contains("rejected"));
    }

    #[test]
    fn always_malformed_exhausts() {
        let b = bridge(MockBackend::dr(0).with_failures(u64::MAX), 3);
        assert!(matches!(b.consolidate_rules("dr", &passages()), Err(BridgeError::RetriesExhausted { attempts: 3, .. })));
        assert_eq!(b.transcript().len(), 3);
    }

    #[test]
    fn generate_looks_up_reference_plan() {
        let rb = load_rulebase(assets::DR_RULEBASE).unwrap();
        let b = bridge(MockBackend::dr(0), 3);
        let plan = b.generate_plan(rb.get("exudates").unwrap()).unwrap();
        assert_eq!(plan, parse_plan(assets::reference_plan("exudates").unwrap()).unwrap());
        assert!(matches!(b.generate_plan(rb.get("age").unwrap()), Err(BridgeError::WrongRuleTarget(_))));
    }

    #[test]
    fn refine_policy() {
        let b = bridge(MockBackend::dr(0), 3);
        let plan = parse_plan(assets::reference_plan("exudates").unwrap()).unwrap();
        let up = b.refine_plan(&plan, &feedback(0.5, 2.0)).unwrap();
        assert_eq!(up.params["min_area"].default, plan.params["min_area"].default + plan.params["min_area"].grid_step);
        let down = b.refine_plan(&plan, &feedback(0.5, -1.0)).unwrap();
        assert_eq!(down.params["min_area"].default, 16.0);
        assert_eq!(b.refine_plan(&plan, &feedback(1.0, 0.0)).unwrap(), plan);

        let mut fb = feedback(0.5, 3.0);
        fb.clamp_flags = vec![ClampFlag { slot: "clip_limit".into(), requested: 7.0, applied: 5.0 }];
        let widened = b.refine_plan(&plan, &fb).unwrap();
        assert_eq!(widened.params["clip_limit"].max, 5.5);
        assert_eq!(widened.params["clip_limit"].default, 5.5);
        assert_eq!(widened.params["min_area"], plan.params["min_area"]);
    }

    #[test]
    fn identity_policy() {
        let b = bridge(MockBackend::dr(0).with_policy(RefinePolicy::Identity), 3);
        let plan = parse_plan(assets::DEGRADED_EXUDATE_PLAN).unwrap();
        assert_eq!(b.refine_plan(&plan, &feedback(0.2, -3.0)).unwrap(), plan);
    }

    #[test]
    fn transcripts_are_reproducible() {
        let run = || {
            let b = bridge(MockBackend::dr(0).with_failures(1), 3);
            b.consolidate_rules("dr", &passages()).unwrap();
            b.transcript_jsonl()
        };
        assert_eq!(run(), run());
    }
}
