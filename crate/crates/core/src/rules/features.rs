use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DemographicRecord, Result, RuleBase, RuleError, RuleKind};
use crate::plan::{ExtractionResult, FEATURE_NAMES};

pub type FeatureVector = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub rule_id: String,
    pub feature: String,
    pub kind: RuleKind,
    /// Standardization applied to demographic entries; identity for visual ones.
    pub mean: f64,
    pub std: f64,
}

impl SchemaEntry {
    pub fn name(&self) -> String {
        format!("{}.{}", self.rule_id, self.feature)
    }
}

/// Ordered feature coordinates of φ, with demographic standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub entries: Vec<SchemaEntry>,
}

impl FeatureSchema {
    /// Visual rules contribute their listed features plus `presence`;
    /// demographic rules contribute the record fields they name.
    pub fn from_rulebase(rb: &RuleBase) -> Result<Self> {
        let mut entries = Vec::new();
        for rule in rb.visual() {
            for f in &rule.feature_names {
                if !FEATURE_NAMES.contains(&f.as_str()) {
                    return Err(RuleError::SchemaMismatch(format!("rule `{}`: unknown feature `{f}`", rule.rule_id)));
                }
            }
            let names = rule.feature_names.iter().map(String::as_str).chain(["presence"]);
            for f in names {
                entries.push(SchemaEntry {
                    rule_id: rule.rule_id.clone(),
                    feature: f.to_string(),
                    kind: RuleKind::Visual,
                    mean: 0.0,
                    std: 1.0,
                });
            }
        }
        for rule in rb.demographic() {
            for f in &rule.feature_names {
                if !DemographicRecord::FIELDS.contains(&f.as_str()) {
                    return Err(RuleError::SchemaMismatch(format!("rule `{}`: unknown field `{f}`", rule.rule_id)));
                }
                entries.push(SchemaEntry {
                    rule_id: rule.rule_id.clone(),
                    feature: f.clone(),
                    kind: RuleKind::Demographic,
                    mean: 0.0,
                    std: 1.0,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(SchemaEntry::name).collect()
    }

    /// Fits demographic mean and population stddev on training records.
    /// A zero spread is stored as 1 so the transform stays finite.
    pub fn fit_demographics(&mut self, records: &[DemographicRecord]) {
        if records.is_empty() {
            return;
        }
        let n = records.len() as f64;
        for e in self.entries.iter_mut().filter(|e| e.kind == RuleKind::Demographic) {
            let vals: Vec<f64> = records.iter().map(|r| r.field(&e.feature).unwrap_or(0.0)).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            e.mean = mean;
            e.std = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
    }

    /// FNV-1a over the ordered entry names and standardization constants.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for e in &self.entries {
            let line = format!("{}|{:?}|{:e}|{:e};", e.name(), e.kind, e.mean, e.std);
            for b in line.bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

pub fn vectorize(results: &[ExtractionResult], demo: &DemographicRecord, schema: &FeatureSchema) -> Result<FeatureVector> {
    let mut by_rule: BTreeMap<&str, &ExtractionResult> = BTreeMap::new();
    for r in results {
        if !schema.entries.iter().any(|e| e.kind == RuleKind::Visual && e.rule_id == r.rule_id) {
            return Err(RuleError::SchemaMismatch(format!("result for unknown rule `{}`", r.rule_id)));
        }
        if by_rule.insert(r.rule_id.as_str(), r).is_some() {
            return Err(RuleError::SchemaMismatch(format!("two results for rule `{}`", r.rule_id)));
        }
    }
    schema
        .entries
        .iter()
        .map(|e| match e.kind {
            RuleKind::Visual => {
                let res = by_rule.get(e.rule_id.as_str());
                Ok(match (res, e.feature.as_str()) {
                    (None, _) => 0.0,
                    (Some(_), "presence") => 1.0,
                    (Some(r), f) => r.feature(f),
                })
            }
            RuleKind::Demographic => {
                let v = demo
                    .field(&e.feature)
                    .ok_or_else(|| RuleError::SchemaMismatch(format!("unknown demographic field `{}`", e.feature)))?;
                Ok((v - e.mean) / e.std)
            }
        })
        .collect()
}

/// Feature matrix CSV: `image_id,label,<schema names...>`.
pub fn write_feature_csv(path: &Path, schema: &FeatureSchema, rows: &[(String, usize, FeatureVector)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["image_id".to_string(), "label".to_string()];
    header.extend(schema.names());
    w.write_record(&header)?;
    for (id, label, v) in rows {
        let mut rec = vec![id.clone(), label.to_string()];
        rec.extend(v.iter().map(|x| format!("{x}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv(path: &Path) -> Result<(Vec<String>, Vec<(String, usize, FeatureVector)>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().skip(2).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |what: &str| RuleError::SchemaMismatch(format!("feature csv: bad {what}"));
        let id = rec.get(0).ok_or_else(|| bad("id"))?.to_string();
        let label = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("label"))?;
        let v: Option<Vec<f64>> = rec.iter().skip(2).map(|s| s.parse().ok()).collect();
        let v = v.ok_or_else(|| bad("value"))?;
        if v.len() != header.len() {
            return Err(bad("row width"));
        }
        rows.push((id, label, v));
    }
    Ok((header, rows))
}
