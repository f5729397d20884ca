use crate::assets::{PROMPT_CONSOLIDATE, PROMPT_GENERATE, PROMPT_REFINE, PROMPT_RETRY};
use crate::plan::{Op, FEATURE_NAMES};
use crate::rules::{ClinicalRule, DemographicRecord, Passage};

use super::RefinementFeedback;

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

pub(super) fn vocabulary() -> String {
    Op::ALL
        .iter()
        .map(|op| {
            let (req, opt) = op.arity();
            let mut line = format!("- {}", op.name());
            if !req.is_empty() {
                line += &format!(" required: {}", req.join(", "));
            }
            if !opt.is_empty() {
                line += &format!(" optional: {}", opt.join(", "));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub(super) fn consolidate(disease: &str, passages: &[Passage]) -> String {
    let body: Vec<String> =
        passages.iter().map(|p| format!("[{}] (0..{})\n{}", p.doc_id, p.text.len(), p.text.trim())).collect();
    fill(
        PROMPT_CONSOLIDATE,
        &[
            ("disease", disease),
            ("visual_features", &FEATURE_NAMES.join(", ")),
            ("demographic_fields", &DemographicRecord::FIELDS.join(", ")),
            ("passages", &body.join("\n\n")),
        ],
    )
}

pub(super) fn generate(rule: &ClinicalRule) -> String {
    let rule_text = serde_json::to_string_pretty(rule).expect("rule serializes");
    fill(PROMPT_GENERATE, &[("vocabulary", &vocabulary()), ("rule_id", &rule.rule_id), ("rule", &rule_text)])
}

pub(super) fn refine(plan_text: &str, feedback: &RefinementFeedback) -> String {
    let fb = serde_json::to_string_pretty(feedback).expect("feedback serializes");
    fill(PROMPT_REFINE, &[("k", &feedback.per_image_scores.len().to_string()), ("plan", plan_text.trim()), ("feedback", &fb)])
}

pub(super) fn retry(error: &str) -> String {
    fill(PROMPT_RETRY, &[("error", error)])
}
