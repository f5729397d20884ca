//! Clinical rule base, local-corpus retrieval and feature vectorization.

mod features;
mod retrieval;

pub use features::{read_feature_csv, vectorize, write_feature_csv, FeatureSchema, FeatureVector, SchemaEntry};
pub use retrieval::{Corpus, Passage};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("duplicate rule id `{0}`")]
    DuplicateRuleId(String),
    #[error("rule base has no visual rule")]
    NoVisualRule,
    #[error("visual rule `{0}` lists no feature names")]
    NoFeatures(String),
    #[error("malformed rule document: {0}")]
    Malformed(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("k must be >= 1")]
    InvalidK,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid demographic record: {0}")]
    InvalidDemographic(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, RuleError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Visual,
    Demographic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClinicalRule {
    pub rule_id: String,
    pub kind: RuleKind,
    pub name: String,
    pub description: String,
    /// Plausible lesion count per severity context, e.g. `"grade_3": [6, 9]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_count: Option<BTreeMap<String, (u32, u32)>>,
    pub feature_names: Vec<String>,
}

impl ClinicalRule {
    /// Midpoint of the expected range for `context`, rounded down.
    pub fn expected_target(&self, context: &str) -> Option<u32> {
        self.expected_count.as_ref()?.get(context).map(|&(lo, hi)| (lo + hi) / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Citation {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleBase {
    pub disease: String,
    pub rules: Vec<ClinicalRule>,
    #[serde(default)]
    pub provenance: Vec<Citation>,
}

impl RuleBase {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for rule in &self.rules {
            if !seen.insert(rule.rule_id.as_str()) {
                return Err(RuleError::DuplicateRuleId(rule.rule_id.clone()));
            }
            if rule.kind == RuleKind::Visual && rule.feature_names.is_empty() {
                return Err(RuleError::NoFeatures(rule.rule_id.clone()));
            }
        }
        if !self.rules.iter().any(|r| r.kind == RuleKind::Visual) {
            return Err(RuleError::NoVisualRule);
        }
        Ok(())
    }

    pub fn visual(&self) -> impl Iterator<Item = &ClinicalRule> {
        self.rules.iter().filter(|r| r.kind == RuleKind::Visual)
    }

    pub fn demographic(&self) -> impl Iterator<Item = &ClinicalRule> {
        self.rules.iter().filter(|r| r.kind == RuleKind::Demographic)
    }

    pub fn get(&self, rule_id: &str) -> Option<&ClinicalRule> {
        self.rules.iter().find(|r| r.rule_id == rule_id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("rule base serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

pub fn load_rulebase(document: &str) -> Result<RuleBase> {
    let rb: RuleBase = serde_json::from_str(document).map_err(|e| RuleError::Malformed(e.to_string()))?;
    rb.validate()?;
    Ok(rb)
}

pub fn load_rulebase_file(path: &Path) -> Result<RuleBase> {
    load_rulebase(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemographicRecord {
    pub age: f64,
    pub diabetes_duration: f64,
    pub hba1c: f64,
}

impl DemographicRecord {
    pub const FIELDS: [&'static str; 3] = ["age", "diabetes_duration", "hba1c"];

    pub fn new(age: f64, diabetes_duration: f64, hba1c: f64) -> Result<Self> {
        let rec = Self { age, diabetes_duration, hba1c };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=120.0).contains(&self.age) {
            return Err(RuleError::InvalidDemographic(format!("age {} outside [0,120]", self.age)));
        }
        if !(0.0 <= self.diabetes_duration && self.diabetes_duration <= self.age) {
            return Err(RuleError::InvalidDemographic(format!(
                "duration {} must be within [0, age]",
                self.diabetes_duration
            )));
        }
        if !(3.0..=20.0).contains(&self.hba1c) {
            return Err(RuleError::InvalidDemographic(format!("hba1c {} outside [3,20]", self.hba1c)));
        }
        Ok(())
    }

    pub fn field(&self, name: &str) -> Option<f64> {
        match name {
            "age" => Some(self.age),
            "diabetes_duration" => Some(self.diabetes_duration),
            "hba1c" => Some(self.hba1c),
            _ => None,
        }
    }
}
