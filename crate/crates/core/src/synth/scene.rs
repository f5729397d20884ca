use rand::Rng;

use super::{
    dataset::draw_demographic, palette, LesionKind, LesionTruth, Result, SceneSpec, SynthError, SynthSample, SALT_NOISE,
    SALT_SCENE,
};
use crate::imaging::{BinaryMask, Raster};
use crate::rng::{derive, gaussian_noise, stream, Stream};

const PLACEMENT_RETRIES: usize = 20_000;
const FIELD_MARGIN: i64 = 6;
const LESION_GAP: i64 = 4;
const VESSEL_CLEARANCE: i64 = 2;

struct Canvas {
    size: i64,
    px: Vec<[i32; 3]>,
}

impl Canvas {
    fn idx(&self, x: i64, y: i64) -> Option<usize> {
        (x >= 0 && y >= 0 && x < self.size && y < self.size).then(|| (y * self.size + x) as usize)
    }

    fn paint(&mut self, x: i64, y: i64, rgb: [i32; 3]) {
        if let Some(i) = self.idx(x, y) {
            self.px[i] = rgb;
        }
    }
}

fn d2(ax: i64, ay: i64, bx: i64, by: i64) -> i64 {
    (ax - bx) * (ax - bx) + (ay - by) * (ay - by)
}

fn lerp(a: [i32; 3], b: [i32; 3], wa: i32, den: i32) -> [i32; 3] {
    let mut out = [0; 3];
    for c in 0..3 {
        out[c] = (a[c] * wa + b[c] * (den - wa) + den / 2) / den;
    }
    out
}

/// A placed lesion's centre and footprint radius.
struct Footprint {
    x: i64,
    y: i64,
    r: i64,
}

struct Scene<'a> {
    spec: &'a SceneSpec,
    canvas: Canvas,
    vessel: Vec<bool>,
    placed: Vec<Footprint>,
}

impl Scene<'_> {
    fn centre(&self) -> i64 {
        self.spec.size as i64 / 2
    }

    fn in_field(&self, x: i64, y: i64, slack: i64) -> bool {
        let c = self.centre();
        let r = self.spec.field_radius() - slack;
        r >= 0 && d2(x, y, c, c) <= r * r
    }

    fn background(&mut self) {
        let (s, c, rf, rg) = (self.spec.size as i64, self.centre(), self.spec.field_radius(), self.spec.glow_radius());
        let (dx, dy) = (self.spec.disc.cx as i64, self.spec.disc.cy as i64);
        for y in 0..s {
            for x in 0..s {
                if d2(x, y, c, c) > rf * rf {
                    continue;
                }
                let d = d2(x, y, dx, dy).isqrt();
                let g = (rg - d).max(0);
                let mut rgb = palette::FIELD;
                for ch in 0..3 {
                    rgb[ch] += (palette::GLOW[ch] as i64 * g / rg) as i32;
                }
                self.canvas.px[(y * s + x) as usize] = rgb;
            }
        }
    }

    fn sample_point(&self, rng: &mut Stream, accept: impl Fn(i64, i64) -> bool) -> Option<(i64, i64)> {
        let s = self.spec.size as i64;
        for _ in 0..PLACEMENT_RETRIES {
            let x = rng.random_range(0..s);
            let y = rng.random_range(0..s);
            if accept(x, y) {
                return Some((x, y));
            }
        }
        None
    }

    /// Quadratic Bézier from the disc centre to the field rim, 3 px wide.
    fn vessels(&mut self, rng: &mut Stream) -> Result<()> {
        let (c, rf) = (self.centre(), self.spec.field_radius());
        let p0 = (self.spec.disc.cx as i64, self.spec.disc.cy as i64);
        let n = 2 * self.spec.size as i64;
        for index in 0..self.spec.vessels as usize {
            let overconstrained = SynthError::SceneOverconstrained { kind: "vessel", index, retries: PLACEMENT_RETRIES };
            let p2 = self
                .sample_point(rng, |x, y| {
                    let dd = d2(x, y, c, c);
                    dd >= (rf - 12) * (rf - 12) && dd <= (rf - 4) * (rf - 4)
                })
                .ok_or(overconstrained)?;
            let p1 = self.sample_point(rng, |x, y| d2(x, y, c, c) <= (rf - 20) * (rf - 20)).ok_or(
                SynthError::SceneOverconstrained { kind: "vessel", index, retries: PLACEMENT_RETRIES },
            )?;
            for t in 0..=n {
                let (a, b, e) = ((n - t) * (n - t), 2 * t * (n - t), t * t);
                let x = (a * p0.0 + b * p1.0 + e * p2.0 + n * n / 2) / (n * n);
                let y = (a * p0.1 + b * p1.1 + e * p2.1 + n * n / 2) / (n * n);
                for oy in -1..=1 {
                    for ox in -1..=1 {
                        let (px, py) = (x + ox, y + oy);
                        if ox * ox + oy * oy <= 2 && self.in_field(px, py, 0) {
                            self.canvas.paint(px, py, palette::VESSEL);
                            self.vessel[(py * self.spec.size as i64 + px) as usize] = true;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn disc(&mut self) {
        let d = self.spec.disc;
        let (cx, cy, r) = (d.cx as i64, d.cy as i64, d.r as i64);
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                let dd = d2(x, y, cx, cy);
                if dd > r * r {
                    continue;
                }
                let dist = dd.isqrt();
                let mut rgb = palette::DISC_PEAK;
                for ch in 0..3 {
                    rgb[ch] -= (palette::DISC_DROP[ch] as i64 * dist / r) as i32;
                }
                self.canvas.paint(x, y, rgb);
            }
        }
    }

    /// Exudate-coloured specks just outside the disc; not lesions.
    fn reflexes(&mut self, rng: &mut Stream) -> Result<()> {
        let (dx, dy, rd) = (self.spec.disc.cx as i64, self.spec.disc.cy as i64, self.spec.disc.r as i64);
        let mut spots: Vec<Footprint> = Vec::new();
        for index in 0..self.spec.reflexes as usize {
            let r = rng.random_range(3..=4i64);
            let (lo, hi) = (13 * rd / 10, 2 * rd);
            let (x, y) = self
                .sample_point(rng, |x, y| {
                    let dd = d2(x, y, dx, dy);
                    dd >= lo * lo
                        && dd <= hi * hi
                        && self.in_field(x, y, r + 2)
                        && spots.iter().all(|f| d2(x, y, f.x, f.y) >= (f.r + r + LESION_GAP).pow(2))
                })
                .ok_or(SynthError::SceneOverconstrained { kind: "reflex", index, retries: PLACEMENT_RETRIES })?;
            for oy in -r..=r {
                for ox in -r..=r {
                    if ox * ox + oy * oy <= r * r {
                        self.canvas.paint(x + ox, y + oy, palette::EXUDATE);
                    }
                }
            }
            spots.push(Footprint { x, y, r });
        }
        Ok(())
    }

    fn clear_of_vessels(&self, x: i64, y: i64, r: i64) -> bool {
        let s = self.spec.size as i64;
        let reach = r + VESSEL_CLEARANCE;
        for oy in -reach..=reach {
            for ox in -reach..=reach {
                if ox * ox + oy * oy > reach * reach {
                    continue;
                }
                let (px, py) = (x + ox, y + oy);
                if px >= 0 && py >= 0 && px < s && py < s && self.vessel[(py * s + px) as usize] {
                    return false;
                }
            }
        }
        true
    }

    fn place(&mut self, rng: &mut Stream, kind: LesionKind, index: usize, footprint: i64) -> Result<(i64, i64)> {
        let (dx, dy) = (self.spec.disc.cx as i64, self.spec.disc.cy as i64);
        let clearance = self.spec.lesion_clearance() + footprint;
        let found = self.sample_point(rng, |x, y| {
            self.in_field(x, y, footprint + FIELD_MARGIN)
                && d2(x, y, dx, dy) >= clearance * clearance
                && self.placed.iter().all(|f| d2(x, y, f.x, f.y) >= (f.r + footprint + LESION_GAP).pow(2))
                && self.clear_of_vessels(x, y, footprint)
        });
        let (x, y) = found.ok_or(SynthError::SceneOverconstrained {
            kind: kind.rule_id(),
            index,
            retries: PLACEMENT_RETRIES,
        })?;
        self.placed.push(Footprint { x, y, r: footprint });
        Ok((x, y))
    }

    /// Paints a solid disk `dx² + dy² <= r2` and returns its truth record.
    fn blob(&mut self, kind: LesionKind, x: i64, y: i64, r2: i64, rgb: [i32; 3]) -> LesionTruth {
        let r = r2.isqrt();
        let side = (2 * r + 1) as u32;
        let mask = BinaryMask::from_fn(side, side, |mx, my| {
            let (ox, oy) = (mx as i64 - r, my as i64 - r);
            ox * ox + oy * oy <= r2
        });
        for oy in -r..=r {
            for ox in -r..=r {
                if ox * ox + oy * oy <= r2 {
                    self.canvas.paint(x + ox, y + oy, rgb);
                }
            }
        }
        truth_from(kind, x - r, y - r, mask)
    }

    /// Pale core with three blended rings; truth is the core.
    fn cotton_wool(&mut self, x: i64, y: i64, r: i64) -> LesionTruth {
        for oy in -(r + 3)..=r + 3 {
            for ox in -(r + 3)..=r + 3 {
                let dd = ox * ox + oy * oy;
                for k in 1..=3i64 {
                    if dd > (r + k - 1).pow(2) && dd <= (r + k).pow(2) {
                        if let Some(i) = self.canvas.idx(x + ox, y + oy) {
                            self.canvas.px[i] = lerp(palette::COTTON_WOOL, self.canvas.px[i], (4 - k) as i32, 4);
                        }
                    }
                }
            }
        }
        self.blob(LesionKind::CottonWool, x, y, r * r, palette::COTTON_WOOL)
    }

    fn lesions(&mut self, rng: &mut Stream) -> Result<Vec<LesionTruth>> {
        let counts = self.spec.counts;
        let mut truth = Vec::new();
        for index in 0..counts.cotton_wool as usize {
            let r = rng.random_range(8..=11i64);
            let (x, y) = self.place(rng, LesionKind::CottonWool, index, r + 3)?;
            truth.push(self.cotton_wool(x, y, r));
        }
        for index in 0..counts.hemorrhages as usize {
            let r = rng.random_range(5..=9i64);
            let (x, y) = self.place(rng, LesionKind::Hemorrhage, index, r)?;
            truth.push(self.blob(LesionKind::Hemorrhage, x, y, r * r, palette::HEMORRHAGE));
        }
        for index in 0..counts.exudates as usize {
            let r = rng.random_range(4..=7i64);
            let (x, y) = self.place(rng, LesionKind::Exudate, index, r)?;
            truth.push(self.blob(LesionKind::Exudate, x, y, r * r, palette::EXUDATE));
        }
        for index in 0..counts.microaneurysms as usize {
            let r2 = [1, 2, 4][rng.random_range(0..3usize)];
            let (x, y) = self.place(rng, LesionKind::Microaneurysm, index, 2)?;
            truth.push(self.blob(LesionKind::Microaneurysm, x, y, r2, palette::MICROANEURYSM));
        }
        Ok(truth)
    }

    fn finish(self) -> Result<Raster> {
        let mut noise = stream(derive(self.spec.seed, SALT_NOISE, 0));
        let sigma = self.spec.noise_sigma_milli as i64;
        let mut data = Vec::with_capacity(self.canvas.px.len() * 3);
        for rgb in &self.canvas.px {
            for &v in rgb {
                let v = v as i64 + gaussian_noise(&mut noise, sigma);
                data.push(v.clamp(0, 255) as u8);
            }
        }
        Ok(Raster::new(self.spec.size, self.spec.size, 3, data)?)
    }
}

fn truth_from(kind: LesionKind, x0: i64, y0: i64, mask: BinaryMask) -> LesionTruth {
    let b = mask.bounding_box().expect("lesion mask nonempty");
    let cropped = BinaryMask::from_fn(b.width(), b.height(), |x, y| mask.get(x + b.x0, y + b.y0));
    let bbox = crate::imaging::Box {
        x0: (x0 + b.x0 as i64) as u32,
        y0: (y0 + b.y0 as i64) as u32,
        x1: (x0 + b.x1 as i64) as u32,
        y1: (y0 + b.y1 as i64) as u32,
    };
    LesionTruth { kind, bbox, mask: cropped }
}

/// Renders `spec`. Layers: field with disc glow, vessels, disc, reflexes,
/// lesions, then pixel noise. Truth is recorded before noise.
pub fn generate_sample(spec: &SceneSpec) -> Result<SynthSample> {
    spec.validate()?;
    let n = spec.size as usize * spec.size as usize;
    let mut scene = Scene {
        spec,
        canvas: Canvas { size: spec.size as i64, px: vec![[0; 3]; n] },
        vessel: vec![false; n],
        placed: Vec::new(),
    };
    let mut rng = stream(derive(spec.seed, SALT_SCENE, 0));
    scene.background();
    scene.vessels(&mut rng)?;
    scene.disc();
    scene.reflexes(&mut rng)?;
    let truth = scene.lesions(&mut rng)?;
    let image = scene.finish()?;
    let grade = spec.counts.grade();
    Ok(SynthSample {
        id: format!("scene_{:016x}", spec.seed),
        spec: spec.clone(),
        image,
        truth,
        demographic: draw_demographic(grade, spec.seed),
        grade,
    })
}
