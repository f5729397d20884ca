//! Bundled fixtures: the DR rule base, its source corpus, reference plans
//! and prompt templates.

pub const DR_RULEBASE: &str = include_str!("../assets/rulebase/dr.json");

pub const PROMPT_CONSOLIDATE: &str = include_str!("../assets/prompts/consolidate.txt");
pub const PROMPT_GENERATE: &str = include_str!("../assets/prompts/generate.txt");
pub const PROMPT_REFINE: &str = include_str!("../assets/prompts/refine.txt");
pub const PROMPT_RETRY: &str = include_str!("../assets/prompts/retry.txt");

pub const CORPUS: [(&str, &str); 6] = [
    ("cotton_wool.txt", include_str!("../assets/corpus/cotton_wool.txt")),
    ("exudates.txt", include_str!("../assets/corpus/exudates.txt")),
    ("hemorrhages.txt", include_str!("../assets/corpus/hemorrhages.txt")),
    ("microaneurysms.txt", include_str!("../assets/corpus/microaneurysms.txt")),
    ("optic_disc.txt", include_str!("../assets/corpus/optic_disc.txt")),
    ("risk_factors.txt", include_str!("../assets/corpus/risk_factors.txt")),
];

/// Reference plans keyed by rule id.
pub const REFERENCE_PLANS: [(&str, &str); 4] = [
    ("exudates", include_str!("../assets/plans/exudates.json")),
    ("hemorrhages", include_str!("../assets/plans/hemorrhages.json")),
    ("microaneurysms", include_str!("../assets/plans/microaneurysms.json")),
    ("cotton_wool", include_str!("../assets/plans/cotton_wool.json")),
];

/// Exudate plan whose area filter starts far too strict.
pub const DEGRADED_EXUDATE_PLAN: &str = include_str!("../assets/plans/exudates_degraded.json");

pub fn reference_plan(rule_id: &str) -> Option<&'static str> {
    REFERENCE_PLANS.iter().find(|(id, _)| *id == rule_id).map(|(_, text)| *text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        let rb = crate::rules::load_rulebase(DR_RULEBASE).unwrap();
        assert_eq!(rb.rules.len(), 7);
        assert_eq!(rb.visual().count(), 4);
        for (id, text) in REFERENCE_PLANS {
            let plan = crate::plan::parse_plan(text).unwrap();
            assert_eq!(plan.rule_id, id);
            assert!(rb.get(id).is_some());
        }
        crate::plan::parse_plan(DEGRADED_EXUDATE_PLAN).unwrap();
        for (id, text) in CORPUS {
            assert!(rb.provenance.iter().any(|c| c.doc_id == id && c.end == text.len()));
        }
    }
}
