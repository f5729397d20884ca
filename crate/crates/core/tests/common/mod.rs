//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

pub mod fake_llm;

use std::collections::BTreeMap;

use kgx_core::imaging::{BinaryMask, Box, Connectivity, Raster};
use kgx_core::plan::{ArgValue, ExtractionPlan, Op, ParamKind, ParamSpec, PlanStep};
use kgx_core::Exact;
use rand::Rng;

/// Foreground components by breadth-first flood fill, each as sorted pixel
/// indices, components sorted by first pixel.
pub fn flood_fill(mask: &BinaryMask, conn: Connectivity) -> Vec<Vec<usize>> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut seen = vec![false; (w * h) as usize];
    let mut out = Vec::new();
    let dirs: &[(i64, i64)] = match conn {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
    };
    for start in 0..(w * h) as usize {
        if seen[start] || !mask.bits()[start] {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p as i64 % w, p as i64 / w);
            for (dx, dy) in dirs {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let q = (ny * w + nx) as usize;
                if !seen[q] && mask.bits()[q] {
                    seen[q] = true;
                    comp.push(q);
                    queue.push_back(q);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

pub fn random_mask(rng: &mut impl Rng, w: u32, h: u32) -> BinaryMask {
    let density = rng.random_range(0.05..0.8);
    let bits = (0..w * h).map(|_| rng.random_bool(density)).collect();
    BinaryMask::from_bits(w, h, bits).unwrap()
}

pub fn random_gray(rng: &mut impl Rng, w: u32, h: u32) -> Raster {
    let lo = rng.random_range(0..200u8);
    let hi = rng.random_range(lo..=255u8);
    let data = (0..w * h).map(|_| rng.random_range(lo..=hi)).collect();
    Raster::new(w, h, 1, data).unwrap()
}

pub fn random_box(rng: &mut impl Rng, size: u32) -> Box {
    let x0 = rng.random_range(0..size - 1);
    let y0 = rng.random_range(0..size - 1);
    let x1 = rng.random_range(x0 + 1..=size);
    let y1 = rng.random_range(y0 + 1..=size);
    Box::new(x0, y0, x1, y1).unwrap()
}

/// Plain global histogram equalization in integer arithmetic:
/// `round(255 * cdf(v) / N)`, halves rounded up.
pub fn global_he(img: &Raster) -> Raster {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let n = img.data().len() as u64;
    let mut map = [0u8; 256];
    let mut cdf = 0u64;
    for v in 0..256 {
        cdf += hist[v];
        map[v] = ((2 * 255 * cdf + n) / (2 * n)) as u8;
    }
    let data = img.data().iter().map(|&v| map[v as usize]).collect();
    Raster::new(img.width(), img.height(), 1, data).unwrap()
}

/// Normalized Shannon entropy of a non-negative score vector; all-zero
/// vectors count as uniform.
pub fn entropy_oracle(scores: &[f64]) -> f64 {
    let total: f64 = scores.iter().sum();
    if total == 0.0 {
        return (scores.len() as f64).ln();
    }
    -scores.iter().filter(|&&s| s > 0.0).map(|&s| s / total * (s / total).ln()).sum::<f64>()
}

pub struct BruteMetrics {
    pub accuracy: Exact,
    pub precision: Vec<Exact>,
    pub recall: Vec<Exact>,
    pub f1: Vec<Exact>,
    pub precision_macro: Exact,
    pub recall_macro: Exact,
    pub f1_macro: Exact,
    pub precision_weighted: Exact,
    pub recall_weighted: Exact,
    pub f1_weighted: Exact,
}

fn q(a: usize, b: usize) -> Exact {
    if b == 0 {
        Exact::from_integer(0)
    } else {
        Exact::new(a as i64, b as i64)
    }
}

/// Direct per-class counting over the pairs, no confusion matrix.
pub fn brute_metrics(pred: &[usize], labels: &[usize], c: usize) -> BruteMetrics {
    let n = labels.len();
    let correct = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    let (mut precision, mut recall, mut f1, mut support) = (vec![], vec![], vec![], vec![]);
    for k in 0..c {
        let tp = pred.iter().zip(labels).filter(|(&p, &y)| p == k && y == k).count();
        let predicted = pred.iter().filter(|&&p| p == k).count();
        let actual = labels.iter().filter(|&&y| y == k).count();
        let (p, r) = (q(tp, predicted), q(tp, actual));
        precision.push(p);
        recall.push(r);
        // 2tp / (predicted + actual) is the same harmonic mean
        f1.push(q(2 * tp, predicted + actual));
        support.push(actual);
    }
    let mean = |v: &[Exact]| v.iter().fold(Exact::from_integer(0), |a, b| a + b) / Exact::from_integer(c as i64);
    let weighted = |v: &[Exact]| {
        let s = v.iter().zip(&support).fold(Exact::from_integer(0), |a, (x, &s)| a + x * Exact::from_integer(s as i64));
        if n == 0 {
            s
        } else {
            s / Exact::from_integer(n as i64)
        }
    };
    BruteMetrics {
        accuracy: q(correct, n),
        precision_macro: mean(&precision),
        recall_macro: mean(&recall),
        f1_macro: mean(&f1),
        precision_weighted: weighted(&precision),
        recall_weighted: weighted(&recall),
        f1_weighted: weighted(&f1),
        precision,
        recall,
        f1,
    }
}

fn real(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    // a few decimals, so plans look like hand-written ones
    let v: f64 = rng.random_range(lo..hi);
    (v * 1000.0).round() / 1000.0
}

fn maybe_slot(
    rng: &mut impl Rng,
    params: &mut BTreeMap<String, ParamSpec>,
    name: &str,
    kind: ParamKind,
    lo: f64,
    hi: f64,
    literal: ArgValue,
) -> ArgValue {
    if !rng.random_bool(0.3) {
        return literal;
    }
    let slot = format!("{name}_{}", params.len());
    let (min, max) = (lo, hi);
    let default = match kind {
        ParamKind::Int => rng.random_range(min as i64..=max as i64) as f64,
        ParamKind::Real => real(rng, min, max).clamp(min, max),
    };
    let grid_step = if kind == ParamKind::Int { 1.0 } else { 0.05 };
    params.insert(slot.clone(), ParamSpec { kind, min, max, default, grid_step });
    ArgValue::Slot(slot)
}

/// A random plan that passes static validation.
pub fn random_plan(rng: &mut impl Rng, id: usize) -> ExtractionPlan {
    let mut params = BTreeMap::new();
    let mut steps = Vec::new();
    let p = &mut params;
    if rng.random_bool(0.5) {
        steps.push(PlanStep::new(Op::ToGrayscale));
    } else {
        let c = ArgValue::Int(rng.random_range(0..=2));
        steps.push(PlanStep::new(Op::ExtractChannel).arg("channel", c));
    }
    let (mut otsu, mut disc) = (false, false);
    for _ in 0..rng.random_range(0..=3) {
        match rng.random_range(0..3) {
            0 => {
                let lit = ArgValue::Real(real(rng, 1.0, 6.0));
                let clip = maybe_slot(rng, p, "clip", ParamKind::Real, 1.0, 6.0, lit);
                let tx = ArgValue::Int(rng.random_range(1..=8));
                let ty = ArgValue::Int(rng.random_range(1..=8));
                steps.push(PlanStep::new(Op::Clahe).arg("clip_limit", clip).arg("tiles_x", tx).arg("tiles_y", ty));
            }
            1 => {
                otsu = true;
                steps.push(PlanStep::new(Op::OtsuThreshold));
            }
            _ => {
                disc = true;
                let lit = ArgValue::Real(real(rng, 0.5, 0.99));
                let qv = maybe_slot(rng, p, "quantile", ParamKind::Real, 0.5, 0.95, lit);
                steps.push(PlanStep::new(Op::BrightestRegion).arg("quantile", qv));
            }
        }
    }
    let pol = ArgValue::Text(if rng.random_bool(0.5) { "above" } else { "below" }.into());
    let mut th = PlanStep::new(Op::Threshold).arg("polarity", pol);
    if !otsu || rng.random_bool(0.5) {
        let lit = ArgValue::Int(rng.random_range(0..=255));
        th = th.arg("t", maybe_slot(rng, p, "t", ParamKind::Int, 0.0, 255.0, lit));
    }
    steps.push(th);
    for _ in 0..rng.random_range(0..=2) {
        let op = ["erode", "dilate", "open", "close"][rng.random_range(0..4)];
        let r = ArgValue::Int(rng.random_range(1..=3));
        let it = ArgValue::Int(rng.random_range(1..=2));
        steps.push(PlanStep::new(Op::Morphology).arg("op", ArgValue::Text(op.into())).arg("radius", r).arg("iters", it));
    }
    if disc && rng.random_bool(0.7) {
        let m = ArgValue::Real(real(rng, 1.0, 2.0));
        steps.push(PlanStep::new(Op::ExcludeDisk).arg("margin", m));
    }
    let conn = ArgValue::Int(if rng.random_bool(0.5) { 4 } else { 8 });
    steps.push(PlanStep::new(Op::ConnectedComponents).arg("connectivity", conn));
    if rng.random_bool(0.7) {
        let lo = rng.random_range(0..50);
        let hi = rng.random_range(lo..=lo + 500);
        let lit = ArgValue::Int(lo);
        let min_area = maybe_slot(rng, p, "min_area", ParamKind::Int, 0.0, lo as f64, lit);
        let mut f = PlanStep::new(Op::FilterRegions).arg("min_area", min_area).arg("max_area", ArgValue::Int(hi));
        if rng.random_bool(0.5) {
            f = f.arg("min_circularity", ArgValue::Real(real(rng, 0.0, 1.0)));
        }
        if rng.random_bool(0.3) {
            f = f.arg("min_intensity", ArgValue::Real(real(rng, 0.0, 128.0)));
        }
        steps.push(f);
    }
    if rng.random_bool(0.8) {
        steps.push(PlanStep::new(Op::EmitDetections));
    }
    let rule = ["exudates", "hemorrhages", "microaneurysms", "cotton_wool"][rng.random_range(0..4)];
    ExtractionPlan { plan_id: format!("random-{id}"), rule_id: rule.into(), steps, params }
}
