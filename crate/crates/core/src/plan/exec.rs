use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ArgValue, ExtractionPlan, Op, PlanError, PlanStep, Result};
use crate::imaging::{
    brightest_region, clahe, connected_components, exclude_disk, extract_channel, morphology, otsu_threshold,
    threshold, to_grayscale, BinaryMask, Box, BrightRegion, Connectivity, LabeledRegion, MorphOp, Polarity, Raster,
    TileGrid,
};

/// Scalar features every plan result reports, in schema order.
pub const FEATURE_NAMES: [&str; 5] = ["count", "total_area", "mean_area", "mean_intensity", "centroid_dispersion"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: Box,
    /// Region pixels, cropped to `bbox`.
    #[serde(skip)]
    pub mask: Option<BinaryMask>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub rule_id: String,
    pub detections: Vec<Detection>,
    pub count: usize,
    pub scalar_features: BTreeMap<String, f64>,
}

impl ExtractionResult {
    pub fn boxes(&self) -> Vec<Box> {
        self.detections.iter().map(|d| d.bbox).collect()
    }

    pub fn feature(&self, name: &str) -> f64 {
        self.scalar_features.get(name).copied().unwrap_or(0.0)
    }
}

enum Value {
    Raster(Raster),
    Mask(BinaryMask),
    Regions(Vec<LabeledRegion>),
    Detections(Vec<LabeledRegion>),
}

#[derive(Default)]
struct Context {
    source: Option<Raster>,
    otsu: Option<u8>,
    disc: Option<BrightRegion>,
    area_window: Option<(f64, f64)>,
}

fn num(step: usize, s: &PlanStep, name: &str) -> Result<f64> {
    match s.args.get(name) {
        Some(ArgValue::Slot(slot)) => Err(PlanError::NotConcrete(slot.clone())),
        Some(v) => v.as_f64().ok_or_else(|| PlanError::InvalidArgument { step, detail: format!("`{name}` not numeric") }),
        None => Err(PlanError::ArityMismatch { step, detail: format!("missing `{name}`") }),
    }
}

fn opt_num(step: usize, s: &PlanStep, name: &str) -> Result<Option<f64>> {
    if s.args.contains_key(name) {
        num(step, s, name).map(Some)
    } else {
        Ok(None)
    }
}

fn text<'a>(step: usize, s: &'a PlanStep, name: &str) -> Result<&'a str> {
    match s.args.get(name) {
        Some(ArgValue::Text(t)) => Ok(t),
        _ => Err(PlanError::InvalidArgument { step, detail: format!("`{name}` must be text") }),
    }
}

fn kind_error(step: usize, op: Op) -> PlanError {
    PlanError::TypeChainBroken { step, detail: format!("`{}` received the wrong value kind", op.name()) }
}

/// Score of a surviving region: circularity times fit to the area window.
pub(crate) fn detection_score(region: &LabeledRegion, window: Option<(f64, f64)>) -> f64 {
    let fit = match window {
        Some((lo, hi)) if hi > lo => {
            let mid = (lo + hi) / 2.0;
            (1.0 - (region.area as f64 - mid).abs() / (hi - lo)).clamp(0.0, 1.0)
        }
        _ => 1.0,
    };
    (region.circularity * fit).clamp(0.0, 1.0)
}

fn crop_mask(region: &LabeledRegion, width: u32) -> BinaryMask {
    let b = region.bbox;
    let mut m = BinaryMask::new(b.width(), b.height());
    for &p in &region.pixels {
        let (x, y) = ((p % width as usize) as u32, (p / width as usize) as u32);
        m.set(x - b.x0, y - b.y0, true);
    }
    m
}

fn apply(idx: usize, step: &PlanStep, value: Value, ctx: &mut Context) -> Result<Value> {
    let exec = |e| PlanError::Execution { step: idx, source: e };
    Ok(match (step.op, value) {
        (Op::ToGrayscale, Value::Raster(r)) => Value::Raster(to_grayscale(&r).map_err(exec)?),
        (Op::ExtractChannel, Value::Raster(r)) => {
            Value::Raster(extract_channel(&r, num(idx, step, "channel")? as usize).map_err(exec)?)
        }
        (Op::Clahe, Value::Raster(r)) => {
            let tiles = TileGrid::new(num(idx, step, "tiles_x")? as u32, num(idx, step, "tiles_y")? as u32);
            Value::Raster(clahe(&r, num(idx, step, "clip_limit")?, tiles).map_err(exec)?)
        }
        (Op::OtsuThreshold, Value::Raster(r)) => {
            ctx.otsu = Some(otsu_threshold(&r).map_err(exec)?);
            Value::Raster(r)
        }
        (Op::BrightestRegion, Value::Raster(r)) => {
            ctx.disc = Some(brightest_region(&r, num(idx, step, "quantile")?).map_err(exec)?);
            Value::Raster(r)
        }
        (Op::Threshold, Value::Raster(r)) => {
            let polarity = match text(idx, step, "polarity")? {
                "above" => Polarity::Above,
                _ => Polarity::Below,
            };
            let t = match opt_num(idx, step, "t")? {
                Some(t) => t as u8,
                None => ctx.otsu.ok_or_else(|| kind_error(idx, step.op))?,
            };
            let mask = threshold(&r, t, polarity).map_err(exec)?;
            ctx.source = Some(r);
            Value::Mask(mask)
        }
        (Op::Morphology, Value::Mask(m)) => {
            let op = match text(idx, step, "op")? {
                "erode" => MorphOp::Erode,
                "dilate" => MorphOp::Dilate,
                "open" => MorphOp::Open,
                _ => MorphOp::Close,
            };
            let radius = num(idx, step, "radius")? as u32;
            let iters = num(idx, step, "iters")? as u32;
            Value::Mask(morphology(&m, op, radius, iters).map_err(exec)?)
        }
        (Op::ExcludeDisk, Value::Mask(m)) => {
            let disc = ctx.disc.as_ref().ok_or_else(|| kind_error(idx, step.op))?;
            Value::Mask(exclude_disk(&m, disc.centroid, disc.radius, num(idx, step, "margin")?).map_err(exec)?)
        }
        (Op::ConnectedComponents, Value::Mask(m)) => {
            let conn = Connectivity::from_count(num(idx, step, "connectivity")? as u32)
                .ok_or_else(|| PlanError::InvalidArgument { step: idx, detail: "connectivity must be 4 or 8".into() })?;
            Value::Regions(connected_components(&m, conn, ctx.source.as_ref()))
        }
        (Op::FilterRegions, Value::Regions(regions)) => {
            let (lo, hi) = (num(idx, step, "min_area")?, num(idx, step, "max_area")?);
            let min_circ = opt_num(idx, step, "min_circularity")?.unwrap_or(0.0);
            let min_int = opt_num(idx, step, "min_intensity")?.unwrap_or(0.0);
            let max_int = opt_num(idx, step, "max_intensity")?.unwrap_or(255.0);
            ctx.area_window = Some((lo, hi));
            Value::Regions(
                regions
                    .into_iter()
                    .filter(|r| {
                        let a = r.area as f64;
                        a >= lo
                            && a <= hi
                            && r.circularity >= min_circ
                            && r.mean_intensity >= min_int
                            && r.mean_intensity <= max_int
                    })
                    .collect(),
            )
        }
        (Op::EmitDetections, Value::Regions(regions)) => Value::Detections(regions),
        (op, _) => return Err(kind_error(idx, op)),
    })
}

fn summarize(rule_id: &str, regions: Vec<LabeledRegion>, width: u32, window: Option<(f64, f64)>) -> ExtractionResult {
    let n = regions.len();
    let total_area: f64 = regions.iter().map(|r| r.area as f64).sum();
    let (mut cx, mut cy) = (0.0, 0.0);
    for r in &regions {
        cx += r.centroid.0;
        cy += r.centroid.1;
    }
    let dispersion = if n >= 2 {
        let (mx, my) = (cx / n as f64, cy / n as f64);
        let ss: f64 = regions.iter().map(|r| (r.centroid.0 - mx).powi(2) + (r.centroid.1 - my).powi(2)).sum();
        (ss / n as f64).sqrt()
    } else {
        0.0
    };
    let mean_intensity = if n > 0 { regions.iter().map(|r| r.mean_intensity).sum::<f64>() / n as f64 } else { 0.0 };
    let features = [
        n as f64,
        total_area,
        if n > 0 { total_area / n as f64 } else { 0.0 },
        mean_intensity,
        dispersion,
    ];
    let detections = regions
        .iter()
        .map(|r| Detection { bbox: r.bbox, mask: Some(crop_mask(r, width)), score: detection_score(r, window) })
        .collect();
    ExtractionResult {
        rule_id: rule_id.to_string(),
        detections,
        count: n,
        scalar_features: FEATURE_NAMES.iter().map(|s| s.to_string()).zip(features).collect(),
    }
}

/// Runs a concrete plan on one image.
pub fn execute_plan(plan: &ExtractionPlan, img: &Raster) -> Result<ExtractionResult> {
    if let Some(slot) = plan.steps.iter().flat_map(|s| s.slots()).next() {
        return Err(PlanError::NotConcrete(slot.to_string()));
    }
    let mut ctx = Context::default();
    let mut value = Value::Raster(img.clone());
    for (idx, step) in plan.steps.iter().enumerate() {
        value = apply(idx, step, value, &mut ctx)?;
    }
    let regions = match value {
        Value::Regions(r) | Value::Detections(r) => r,
        _ => return Err(kind_error(plan.steps.len().saturating_sub(1), plan.steps.last().map_or(Op::EmitDetections, |s| s.op))),
    };
    Ok(summarize(&plan.rule_id, regions, img.width(), ctx.area_window))
}
