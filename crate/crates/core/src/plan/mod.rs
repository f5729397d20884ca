//! Verifiable extraction plans.
//!
//! A plan is a closed, type-checked sequence of imaging operations with named
//! tunable slots (`"$clip_limit"`). Plans are what the language-model bridge
//! must produce; anything that does not parse and type-check is rejected
//! before it can run.

mod exec;
mod parse;

pub use exec::{execute_plan, Detection, ExtractionResult, FEATURE_NAMES};
pub use parse::{parse_plan, serialize_plan};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::ImagingError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("step {step}: unknown op `{op}`")]
    UnknownOp { step: usize, op: String },
    #[error("step {step}: arity mismatch: {detail}")]
    ArityMismatch { step: usize, detail: String },
    #[error("step {step}: unbound slot `${slot}`")]
    UnboundSlot { step: usize, slot: String },
    #[error("step {step}: type chain broken: {detail}")]
    TypeChainBroken { step: usize, detail: String },
    #[error("step {step}: invalid argument: {detail}")]
    InvalidArgument { step: usize, detail: String },
    #[error("malformed plan document: {0}")]
    MalformedDocument(String),
    #[error("invalid parameter spec `{name}`: {detail}")]
    InvalidParam { name: String, detail: String },
    #[error("step {step}: {source}")]
    Execution { step: usize, source: ImagingError },
    #[error("plan is not concrete; slot `${0}` still referenced")]
    NotConcrete(String),
}

pub type Result<T> = std::result::Result<T, PlanError>;

/// Closed operation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    ToGrayscale,
    ExtractChannel,
    Clahe,
    OtsuThreshold,
    Threshold,
    Morphology,
    ConnectedComponents,
    BrightestRegion,
    ExcludeDisk,
    FilterRegions,
    EmitDetections,
}

/// What flows between steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Raster,
    Mask,
    Regions,
    Detections,
}

impl Op {
    pub const ALL: [Op; 11] = [
        Op::ToGrayscale,
        Op::ExtractChannel,
        Op::Clahe,
        Op::OtsuThreshold,
        Op::Threshold,
        Op::Morphology,
        Op::ConnectedComponents,
        Op::BrightestRegion,
        Op::ExcludeDisk,
        Op::FilterRegions,
        Op::EmitDetections,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Op::ToGrayscale => "to_grayscale",
            Op::ExtractChannel => "extract_channel",
            Op::Clahe => "clahe",
            Op::OtsuThreshold => "otsu_threshold",
            Op::Threshold => "threshold",
            Op::Morphology => "morphology",
            Op::ConnectedComponents => "connected_components",
            Op::BrightestRegion => "brightest_region",
            Op::ExcludeDisk => "exclude_disk",
            Op::FilterRegions => "filter_regions",
            Op::EmitDetections => "emit_detections",
        }
    }

    pub fn from_name(name: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.name() == name)
    }

    /// Input and output value kinds.
    pub fn signature(self) -> (ValueKind, ValueKind) {
        use ValueKind::*;
        match self {
            Op::ToGrayscale | Op::ExtractChannel | Op::Clahe | Op::OtsuThreshold | Op::BrightestRegion => (Raster, Raster),
            Op::Threshold => (Raster, Mask),
            Op::Morphology | Op::ExcludeDisk => (Mask, Mask),
            Op::ConnectedComponents => (Mask, Regions),
            Op::FilterRegions => (Regions, Regions),
            Op::EmitDetections => (Regions, Detections),
        }
    }

    /// Required and optional argument names.
    pub fn arity(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            Op::ToGrayscale | Op::OtsuThreshold | Op::EmitDetections => (&[], &[]),
            Op::ExtractChannel => (&["channel"], &[]),
            Op::Clahe => (&["clip_limit", "tiles_x", "tiles_y"], &[]),
            Op::Threshold => (&["polarity"], &["t"]),
            Op::Morphology => (&["op", "radius", "iters"], &[]),
            Op::ConnectedComponents => (&["connectivity"], &[]),
            Op::BrightestRegion => (&["quantile"], &[]),
            Op::ExcludeDisk => (&["margin"], &[]),
            Op::FilterRegions => (&["min_area", "max_area"], &["min_circularity", "min_intensity", "max_intensity"]),
        }
    }
}

/// A literal argument or a reference to a tunable slot.
#[derive(Debug, Clone, PartialEq)]
pub enum ArgValue {
    Int(i64),
    Real(f64),
    Text(String),
    Slot(String),
}

impl ArgValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ArgValue::Int(i) => Some(*i as f64),
            ArgValue::Real(r) => Some(*r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub op: Op,
    pub args: BTreeMap<String, ArgValue>,
}

impl PlanStep {
    pub fn new(op: Op) -> Self {
        Self { op, args: BTreeMap::new() }
    }

    pub fn arg(mut self, name: &str, value: ArgValue) -> Self {
        self.args.insert(name.to_string(), value);
        self
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.args.values().filter_map(|v| match v {
            ArgValue::Slot(s) => Some(s.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Real,
    Int,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub kind: ParamKind,
    pub min: f64,
    pub max: f64,
    pub default: f64,
    pub grid_step: f64,
}

impl ParamSpec {
    pub fn validate(&self, name: &str) -> Result<()> {
        let err = |detail: &str| Err(PlanError::InvalidParam { name: name.to_string(), detail: detail.to_string() });
        if !(self.min.is_finite() && self.max.is_finite() && self.default.is_finite() && self.grid_step.is_finite()) {
            return err("non-finite bound");
        }
        if !(self.min <= self.default && self.default <= self.max) {
            return err("requires min <= default <= max");
        }
        if !(self.grid_step > 0.0) {
            return err("grid_step must be > 0");
        }
        Ok(())
    }

    /// Clamps into bounds (rounding int slots); the flag reports clamping.
    pub fn clamp(&self, value: f64) -> (f64, bool) {
        let v = if self.kind == ParamKind::Int { value.round() } else { value };
        let c = v.clamp(self.min, self.max);
        (c, c != v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionPlan {
    pub plan_id: String,
    pub rule_id: String,
    pub steps: Vec<PlanStep>,
    pub params: BTreeMap<String, ParamSpec>,
}

/// A clamped binding reported by [`bind_params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampFlag {
    pub slot: String,
    pub requested: f64,
    pub applied: f64,
}

impl ExtractionPlan {
    pub fn is_concrete(&self) -> bool {
        self.steps.iter().all(|s| s.slots().next().is_none())
    }

    pub fn default_bindings(&self) -> BTreeMap<String, f64> {
        self.params.iter().map(|(k, p)| (k.clone(), p.default)).collect()
    }

    /// Full static validation: slots, arity, argument shapes and the kind chain.
    pub fn validate(&self) -> Result<()> {
        for (name, spec) in &self.params {
            spec.validate(name)?;
        }
        parse::validate_steps(&self.steps, &self.params)
    }
}

/// Replaces every `$slot` with a literal, clamping into the slot's bounds.
pub fn bind_params(plan: &ExtractionPlan, bindings: &BTreeMap<String, f64>) -> Result<(ExtractionPlan, Vec<ClampFlag>)> {
    let mut out = plan.clone();
    let mut flags: Vec<ClampFlag> = Vec::new();
    for (idx, step) in out.steps.iter_mut().enumerate() {
        for value in step.args.values_mut() {
            let ArgValue::Slot(slot) = value else { continue };
            let spec = plan
                .params
                .get(slot.as_str())
                .ok_or_else(|| PlanError::UnboundSlot { step: idx, slot: slot.clone() })?;
            let requested =
                *bindings.get(slot.as_str()).ok_or_else(|| PlanError::UnboundSlot { step: idx, slot: slot.clone() })?;
            let (applied, clamped) = spec.clamp(requested);
            if clamped && !flags.iter().any(|f| &f.slot == slot) {
                flags.push(ClampFlag { slot: slot.clone(), requested, applied });
            }
            *value = match spec.kind {
                ParamKind::Int => ArgValue::Int(applied as i64),
                ParamKind::Real => ArgValue::Real(applied),
            };
        }
    }
    out.validate()?;
    Ok((out, flags))
}
