use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_sample, LesionCounts, LesionKind, LesionTruth, Result, SceneSpec, SynthError, SynthSample};
use crate::imaging::{read_png, write_png, BinaryMask, Box, Raster};
use crate::rng::{derive, stream, Stream, GENERATOR_VERSION};
use crate::rules::DemographicRecord;

const SALT_DEMO: u64 = 0xde30;
const SALT_COUNTS: u64 = 0xc0a7;
const SALT_SAMPLE: u64 = 0x5a3b1e;
const SALT_ORDER: u64 = 0x0bde5;
const MAX_ATTEMPTS: u64 = 8;

/// Per-grade target fractions, grades 0..=4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradeMix(pub [f64; 5]);

impl GradeMix {
    pub fn uniform() -> Self {
        Self([0.2; 5])
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SynthError::InvalidMix("weights must be finite and >= 0".into()));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidMix(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n`; ties go to the lower grade.
    pub fn quotas(&self, n: usize) -> [usize; 5] {
        let mut q = [0usize; 5];
        let mut rem: Vec<(f64, usize)> = Vec::with_capacity(5);
        for (g, w) in self.0.iter().enumerate() {
            let exact = w * n as f64;
            q[g] = exact.floor() as usize;
            rem.push((exact - exact.floor(), g));
        }
        let left = n - q.iter().sum::<usize>();
        rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, g) in rem.iter().take(left) {
            q[g] += 1;
        }
        q
    }
}

/// Grade-conditional demographics: age 50+3g ± 10 years, duration 5+2.5g
/// ± 4 years (half-year steps), HbA1c 6.5+0.6g ± 1.0 % (0.1 steps).
pub(crate) fn draw_demographic(grade: u8, seed: u64) -> DemographicRecord {
    let mut rng = stream(derive(seed, SALT_DEMO, 0));
    let g = grade as i64;
    let age = 50 + 3 * g + rng.random_range(-10..=10i64);
    let half_years = (10 + 5 * g + rng.random_range(-8..=8i64)).clamp(0, 2 * age);
    let tenths = 65 + 6 * g + rng.random_range(-10..=10i64);
    DemographicRecord { age: age as f64, diabetes_duration: half_years as f64 / 2.0, hba1c: tenths as f64 / 10.0 }
}

/// Lesion counts consistent with `grade` under the staging table.
pub(crate) fn draw_counts(grade: u8, rng: &mut Stream) -> LesionCounts {
    let mut c = LesionCounts::default();
    match grade {
        0 => {}
        1 => c.microaneurysms = rng.random_range(1..=5),
        2 => {
            while c.hemorrhages + c.exudates == 0 {
                c.hemorrhages = rng.random_range(0..=5);
                c.exudates = rng.random_range(0..=3);
            }
            c.cotton_wool = rng.random_range(0..=1);
            c.microaneurysms = rng.random_range(0..=5);
        }
        3 => {
            loop {
                c.hemorrhages = rng.random_range(0..=9);
                c.exudates = rng.random_range(0..=5);
                c.cotton_wool = rng.random_range(0..=3);
                if c.grade() == 3 {
                    break;
                }
            }
            c.microaneurysms = rng.random_range(0..=5);
        }
        _ => {
            c.hemorrhages = rng.random_range(10..=12);
            c.exudates = rng.random_range(6..=8);
            c.cotton_wool = rng.random_range(0..=3);
            c.microaneurysms = rng.random_range(0..=5);
        }
    }
    debug_assert_eq!(c.grade(), grade.min(4));
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator: String,
    pub n: usize,
    pub seed: u64,
    pub grade_mix: GradeMix,
    pub size: u32,
    pub noise_sigma_milli: u32,
    pub ids: Vec<String>,
}

/// `n` samples whose grades hit the mix quotas exactly, in seeded order.
///
/// Sample `i` gets its own stream; if its scene cannot be placed the sample
/// seed is re-derived (up to a fixed number of attempts).
pub fn generate_dataset(n: usize, seed: u64, mix: GradeMix, size: u32, noise_sigma_milli: u32) -> Result<Vec<SynthSample>> {
    mix.validate()?;
    if n == 0 {
        return Err(SynthError::InvalidSpec("n must be >= 1".into()));
    }
    let quotas = mix.quotas(n);
    let mut grades: Vec<u8> = (0..5u8).flat_map(|g| std::iter::repeat_n(g, quotas[g as usize])).collect();
    grades.shuffle(&mut stream(derive(seed, SALT_ORDER, 0)));
    grades
        .par_iter()
        .enumerate()
        .map(|(i, &grade)| {
            let mut last = None;
            for attempt in 0..MAX_ATTEMPTS {
                let sample_seed = derive(seed, SALT_SAMPLE, i as u64 + (attempt << 32));
                let counts = draw_counts(grade, &mut stream(derive(sample_seed, SALT_COUNTS, 0)));
                let mut spec = SceneSpec::new(sample_seed, size, counts);
                spec.noise_sigma_milli = noise_sigma_milli;
                match generate_sample(&spec) {
                    Ok(mut s) => {
                        s.id = format!("img_{i:05}");
                        return Ok(s);
                    }
                    Err(e @ SynthError::SceneOverconstrained { .. }) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarLesion {
    pub kind: LesionKind,
    pub bbox: Box,
    /// Mask rows within the box, `1` = lesion pixel.
    pub mask: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub id: String,
    pub grade: u8,
    pub spec: SceneSpec,
    pub demographic: DemographicRecord,
    pub lesions: Vec<SidecarLesion>,
}

impl SampleSidecar {
    pub fn from_sample(s: &SynthSample) -> Self {
        let lesions = s
            .truth
            .iter()
            .map(|t| SidecarLesion {
                kind: t.kind,
                bbox: t.bbox,
                mask: (0..t.mask.height())
                    .map(|y| (0..t.mask.width()).map(|x| if t.mask.get(x, y) { '1' } else { '0' }).collect())
                    .collect(),
            })
            .collect();
        Self { id: s.id.clone(), grade: s.grade, spec: s.spec.clone(), demographic: s.demographic, lesions }
    }

    pub fn truth(&self) -> Result<Vec<LesionTruth>> {
        self.lesions
            .iter()
            .map(|l| {
                let (w, h) = (l.bbox.width(), l.bbox.height());
                let bits: Vec<bool> = l.mask.iter().flat_map(|row| row.chars().map(|c| c == '1')).collect();
                let mask = BinaryMask::from_bits(w, h, bits)?;
                Ok(LesionTruth { kind: l.kind, bbox: l.bbox, mask })
            })
            .collect()
    }
}

/// Layout: `images/<id>.png`, `truth/<id>.json`, `labels.csv`,
/// `demographics.csv` and `dataset.json`.
pub fn save_dataset(dir: &Path, samples: &[SynthSample], manifest: &DatasetManifest) -> Result<()> {
    std::fs::create_dir_all(dir.join("images"))?;
    std::fs::create_dir_all(dir.join("truth"))?;
    samples.par_iter().try_for_each(|s| -> Result<()> {
        write_png(&dir.join("images").join(format!("{}.png", s.id)), &s.image)?;
        let mut text = serde_json::to_string_pretty(&SampleSidecar::from_sample(s))?;
        text.push('\n');
        std::fs::write(dir.join("truth").join(format!("{}.json", s.id)), text)?;
        Ok(())
    })?;
    let mut labels = csv::Writer::from_path(dir.join("labels.csv"))?;
    labels.write_record(["image_id", "grade"])?;
    let mut demo = csv::Writer::from_path(dir.join("demographics.csv"))?;
    demo.write_record(["image_id", "age", "diabetes_duration", "hba1c"])?;
    for s in samples {
        labels.write_record([s.id.clone(), s.grade.to_string()])?;
        let d = s.demographic;
        demo.write_record([s.id.clone(), d.age.to_string(), d.diabetes_duration.to_string(), d.hba1c.to_string()])?;
    }
    labels.flush()?;
    demo.flush()?;
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(dir.join("dataset.json"), text)?;
    Ok(())
}

impl DatasetManifest {
    pub fn new(samples: &[SynthSample], seed: u64, grade_mix: GradeMix, size: u32, noise_sigma_milli: u32) -> Self {
        Self {
            generator: GENERATOR_VERSION.to_string(),
            n: samples.len(),
            seed,
            grade_mix,
            size,
            noise_sigma_milli,
            ids: samples.iter().map(|s| s.id.clone()).collect(),
        }
    }
}

pub fn load_sample(dir: &Path, id: &str) -> Result<SynthSample> {
    let side: SampleSidecar = serde_json::from_str(&std::fs::read_to_string(dir.join("truth").join(format!("{id}.json")))?)?;
    let image = read_png(&dir.join("images").join(format!("{id}.png")))?;
    Ok(SynthSample {
        id: side.id.clone(),
        spec: side.spec.clone(),
        image,
        truth: side.truth()?,
        demographic: side.demographic,
        grade: side.grade,
    })
}

pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<SynthSample>)> {
    let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(dir.join("dataset.json"))?)?;
    let samples = manifest.ids.par_iter().map(|id| load_sample(dir, id)).collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// A dataset image whose truth sidecar may be absent.
#[derive(Debug, Clone)]
pub struct DatasetImage {
    pub id: String,
    pub image: Raster,
    pub grade: u8,
    pub demographic: DemographicRecord,
    pub truth: Option<Vec<LesionTruth>>,
}

impl DatasetImage {
    pub fn truth_boxes(&self, kind: LesionKind) -> Option<Vec<Box>> {
        self.truth.as_ref().map(|t| t.iter().filter(|l| l.kind == kind).map(|l| l.bbox).collect())
    }
}

#[derive(Deserialize)]
struct LabelRow {
    image_id: String,
    grade: u8,
}

#[derive(Deserialize)]
struct DemoRow {
    image_id: String,
    age: f64,
    diabetes_duration: f64,
    hba1c: f64,
}

/// Loads images with labels and demographics from the CSV manifests;
/// `truth` is filled only where `truth/<id>.json` exists.
pub fn load_images(dir: &Path) -> Result<(DatasetManifest, Vec<DatasetImage>)> {
    let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(dir.join("dataset.json"))?)?;
    let mut grades = BTreeMap::new();
    for row in csv::Reader::from_path(dir.join("labels.csv"))?.deserialize() {
        let row: LabelRow = row?;
        grades.insert(row.image_id, row.grade);
    }
    let mut demos = BTreeMap::new();
    for row in csv::Reader::from_path(dir.join("demographics.csv"))?.deserialize() {
        let row: DemoRow = row?;
        let rec = DemographicRecord::new(row.age, row.diabetes_duration, row.hba1c)
            .map_err(|e| SynthError::InvalidSpec(format!("{}: {e}", row.image_id)))?;
        demos.insert(row.image_id, rec);
    }
    let images = manifest
        .ids
        .par_iter()
        .map(|id| {
            let missing = |what: &str| SynthError::InvalidSpec(format!("{id} missing from {what}"));
            let grade = *grades.get(id).ok_or_else(|| missing("labels.csv"))?;
            let demographic = *demos.get(id).ok_or_else(|| missing("demographics.csv"))?;
            let image = read_png(&dir.join("images").join(format!("{id}.png")))?;
            let side = dir.join("truth").join(format!("{id}.json"));
            let truth = if side.exists() {
                let s: SampleSidecar = serde_json::from_str(&std::fs::read_to_string(side)?)?;
                Some(s.truth()?)
            } else {
                None
            };
            Ok(DatasetImage { id: id.clone(), image, grade, demographic, truth })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, images))
}
