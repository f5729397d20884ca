use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Number, Value};

use super::{ArgValue, ExtractionPlan, Op, ParamSpec, PlanError, PlanStep, Result, ValueKind};

/// Static kind as seen by the validator. Plans start from a colour image and
/// must select a single channel before any intensity operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Color,
    Gray,
    Mask,
    Regions,
    Detections,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Color => "colour raster",
            Stage::Gray => "single-channel raster",
            Stage::Mask => "mask",
            Stage::Regions => "regions",
            Stage::Detections => "detections",
        }
    }
}

fn stage_signature(op: Op) -> (Stage, Stage) {
    match op {
        Op::ToGrayscale | Op::ExtractChannel => (Stage::Color, Stage::Gray),
        _ => {
            let (i, o) = op.signature();
            let map = |k: ValueKind| match k {
                ValueKind::Raster => Stage::Gray,
                ValueKind::Mask => Stage::Mask,
                ValueKind::Regions => Stage::Regions,
                ValueKind::Detections => Stage::Detections,
            };
            (map(i), map(o))
        }
    }
}

fn invalid(step: usize, detail: impl Into<String>) -> PlanError {
    PlanError::InvalidArgument { step, detail: detail.into() }
}

/// Checks a literal numeric argument; slots are range-checked at bind time.
fn check_number(step: usize, name: &str, v: &ArgValue, int_only: bool, ok: impl Fn(f64) -> bool) -> Result<()> {
    match v {
        ArgValue::Slot(_) => Ok(()),
        ArgValue::Text(t) => Err(invalid(step, format!("`{name}` must be numeric, got \"{t}\""))),
        ArgValue::Real(_) if int_only => Err(invalid(step, format!("`{name}` must be an integer"))),
        other => {
            let x = other.as_f64().expect("numeric");
            if ok(x) {
                Ok(())
            } else {
                Err(invalid(step, format!("`{name}` = {x} out of range")))
            }
        }
    }
}

fn check_text(step: usize, name: &str, v: &ArgValue, allowed: &[&str]) -> Result<()> {
    match v {
        ArgValue::Text(t) if allowed.contains(&t.as_str()) => Ok(()),
        other => Err(invalid(step, format!("`{name}` must be one of {allowed:?}, got {other:?}"))),
    }
}

fn check_args(idx: usize, step: &PlanStep) -> Result<()> {
    let (required, optional) = step.op.arity();
    for r in required {
        if !step.args.contains_key(*r) {
            return Err(PlanError::ArityMismatch {
                step: idx,
                detail: format!("`{}` requires argument `{r}`", step.op.name()),
            });
        }
    }
    for k in step.args.keys() {
        if !required.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
            return Err(PlanError::ArityMismatch {
                step: idx,
                detail: format!("`{}` takes no argument `{k}`", step.op.name()),
            });
        }
    }
    for (name, v) in &step.args {
        let n = name.as_str();
        match (step.op, n) {
            (Op::ExtractChannel, "channel") => check_number(idx, n, v, true, |x| (0.0..=2.0).contains(&x))?,
            (Op::Clahe, "clip_limit") => check_number(idx, n, v, false, |x| x >= 1.0)?,
            (Op::Clahe, _) => check_number(idx, n, v, true, |x| x >= 1.0)?,
            (Op::Threshold, "polarity") => check_text(idx, n, v, &["above", "below"])?,
            (Op::Threshold, "t") => check_number(idx, n, v, true, |x| (0.0..=255.0).contains(&x))?,
            (Op::Morphology, "op") => check_text(idx, n, v, &["erode", "dilate", "open", "close"])?,
            (Op::Morphology, _) => check_number(idx, n, v, true, |x| x >= 1.0)?,
            (Op::ConnectedComponents, _) => check_number(idx, n, v, true, |x| x == 4.0 || x == 8.0)?,
            (Op::BrightestRegion, _) => check_number(idx, n, v, false, |x| x > 0.0 && x < 1.0)?,
            (Op::ExcludeDisk, _) => check_number(idx, n, v, false, |x| x >= 1.0)?,
            (Op::FilterRegions, "min_circularity") => check_number(idx, n, v, false, |x| (0.0..=1.0).contains(&x))?,
            (Op::FilterRegions, _) => check_number(idx, n, v, false, |x| x >= 0.0)?,
            _ => {}
        }
    }
    if step.op == Op::FilterRegions {
        if let (Some(lo), Some(hi)) = (step.args["min_area"].as_f64(), step.args["max_area"].as_f64()) {
            if lo > hi {
                return Err(invalid(idx, "min_area > max_area"));
            }
        }
    }
    Ok(())
}

pub(crate) fn validate_steps(steps: &[PlanStep], params: &BTreeMap<String, ParamSpec>) -> Result<()> {
    if steps.is_empty() {
        return Err(PlanError::TypeChainBroken { step: 0, detail: "plan has no steps".into() });
    }
    let mut stage = Stage::Color;
    let mut have_otsu = false;
    let mut have_disc = false;
    for (idx, step) in steps.iter().enumerate() {
        for slot in step.slots() {
            if !params.contains_key(slot) {
                return Err(PlanError::UnboundSlot { step: idx, slot: slot.to_string() });
            }
        }
        check_args(idx, step)?;
        let (input, output) = stage_signature(step.op);
        if input != stage {
            return Err(PlanError::TypeChainBroken {
                step: idx,
                detail: format!("`{}` expects {} but receives {}", step.op.name(), input.name(), stage.name()),
            });
        }
        match step.op {
            Op::OtsuThreshold => have_otsu = true,
            Op::BrightestRegion => have_disc = true,
            Op::Threshold if !step.args.contains_key("t") && !have_otsu => {
                return Err(PlanError::TypeChainBroken {
                    step: idx,
                    detail: "threshold without `t` needs a preceding otsu_threshold".into(),
                })
            }
            Op::ExcludeDisk if !have_disc => {
                return Err(PlanError::TypeChainBroken {
                    step: idx,
                    detail: "exclude_disk needs a preceding brightest_region".into(),
                })
            }
            _ => {}
        }
        stage = output;
    }
    if !matches!(stage, Stage::Regions | Stage::Detections) {
        return Err(PlanError::TypeChainBroken {
            step: steps.len() - 1,
            detail: format!("plan must end in regions or detections, ends in {}", stage.name()),
        });
    }
    Ok(())
}

fn malformed(msg: impl Into<String>) -> PlanError {
    PlanError::MalformedDocument(msg.into())
}

fn parse_arg(idx: usize, name: &str, v: &Value) -> Result<ArgValue> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(ArgValue::Int(i))
            } else {
                n.as_f64().map(ArgValue::Real).ok_or_else(|| invalid(idx, format!("`{name}` is not representable")))
            }
        }
        Value::String(s) => match s.strip_prefix('$') {
            Some(slot) if !slot.is_empty() => Ok(ArgValue::Slot(slot.to_string())),
            Some(_) => Err(invalid(idx, "empty slot name")),
            None => Ok(ArgValue::Text(s.clone())),
        },
        other => Err(invalid(idx, format!("`{name}` has unsupported value {other}"))),
    }
}

fn parse_step(idx: usize, v: &Value) -> Result<PlanStep> {
    let obj = v.as_object().ok_or_else(|| malformed(format!("step {idx} is not an object")))?;
    for k in obj.keys() {
        if k != "op" && k != "args" {
            return Err(malformed(format!("step {idx}: unknown key `{k}`")));
        }
    }
    let name = obj
        .get("op")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(format!("step {idx}: missing string `op`")))?;
    let op = Op::from_name(name).ok_or_else(|| PlanError::UnknownOp { step: idx, op: name.to_string() })?;
    let mut args = BTreeMap::new();
    match obj.get("args") {
        None | Some(Value::Null) => {}
        Some(Value::Object(m)) => {
            for (k, v) in m {
                args.insert(k.clone(), parse_arg(idx, k, v)?);
            }
        }
        Some(_) => return Err(malformed(format!("step {idx}: `args` must be an object"))),
    }
    Ok(PlanStep { op, args })
}

/// Parses and fully validates a plan document.
pub fn parse_plan(text: &str) -> Result<ExtractionPlan> {
    let doc: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    plan_from_value(&doc)
}

pub(crate) fn plan_from_value(doc: &Value) -> Result<ExtractionPlan> {
    let obj = doc.as_object().ok_or_else(|| malformed("top level must be an object"))?;
    for k in obj.keys() {
        if !matches!(k.as_str(), "plan_id" | "rule_id" | "steps" | "params") {
            return Err(malformed(format!("unknown top-level key `{k}`")));
        }
    }
    let text_field = |key: &str| -> Result<String> {
        obj.get(key)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| malformed(format!("missing string `{key}`")))
    };
    let plan_id = text_field("plan_id")?;
    let rule_id = text_field("rule_id")?;
    let steps = obj
        .get("steps")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing array `steps`"))?
        .iter()
        .enumerate()
        .map(|(i, s)| parse_step(i, s))
        .collect::<Result<Vec<_>>>()?;
    let params: BTreeMap<String, ParamSpec> = match obj.get("params") {
        None => BTreeMap::new(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| malformed(format!("params: {e}")))?,
    };
    let plan = ExtractionPlan { plan_id, rule_id, steps, params };
    plan.validate()?;
    Ok(plan)
}

fn arg_to_value(v: &ArgValue) -> Value {
    match v {
        ArgValue::Int(i) => Value::from(*i),
        ArgValue::Real(r) => Number::from_f64(*r).map(Value::Number).unwrap_or(Value::Null),
        ArgValue::Text(t) => Value::String(t.clone()),
        ArgValue::Slot(s) => Value::String(format!("${s}")),
    }
}

/// Canonical text: sorted keys, two-space indentation, shortest round-trip
/// decimals, trailing newline.
pub fn serialize_plan(plan: &ExtractionPlan) -> String {
    let mut out = serde_json::to_string_pretty(&plan_to_value(plan)).expect("json serialize");
    out.push('\n');
    out
}

pub(crate) fn plan_to_value(plan: &ExtractionPlan) -> Value {
    let steps: Vec<Value> = plan
        .steps
        .iter()
        .map(|s| {
            let mut m = Map::new();
            m.insert("op".into(), Value::String(s.op.name().into()));
            let args: Map<String, Value> = s.args.iter().map(|(k, v)| (k.clone(), arg_to_value(v))).collect();
            m.insert("args".into(), Value::Object(args));
            Value::Object(m)
        })
        .collect();
    let mut top = Map::new();
    top.insert("plan_id".into(), Value::String(plan.plan_id.clone()));
    top.insert("rule_id".into(), Value::String(plan.rule_id.clone()));
    top.insert("steps".into(), Value::Array(steps));
    top.insert("params".into(), serde_json::to_value(&plan.params).expect("params serialize"));
    Value::Object(top)
}

impl Serialize for ExtractionPlan {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        plan_to_value(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExtractionPlan {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        plan_from_value(&v).map_err(serde::de::Error::custom)
    }
}
