use serde::{Deserialize, Serialize};

use super::{BinaryMask, ImagingError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Erode,
    Dilate,
    Open,
    Close,
}

/// Offsets of the discrete disk `dx² + dy² <= r²`.
pub fn disk_offsets(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Working grid padded on every side so that the chained operations behave as
/// on an unbounded plane whose outside is background.
struct Padded {
    w: i64,
    h: i64,
    pad: i64,
    bits: Vec<bool>,
}

impl Padded {
    fn from_mask(mask: &BinaryMask, pad: i64) -> Self {
        let w = mask.width() as i64 + 2 * pad;
        let h = mask.height() as i64 + 2 * pad;
        let mut bits = vec![false; (w * h) as usize];
        for y in 0..mask.height() as i64 {
            for x in 0..mask.width() as i64 {
                bits[((y + pad) * w + x + pad) as usize] = mask.get(x as u32, y as u32);
            }
        }
        Self { w, h, pad, bits }
    }

    fn at(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.w && y < self.h && self.bits[(y * self.w + x) as usize]
    }

    fn step(&mut self, se: &[(i64, i64)], erode: bool) {
        let mut next = vec![false; self.bits.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                next[(y * self.w + x) as usize] = if erode {
                    se.iter().all(|&(dx, dy)| self.at(x + dx, y + dy))
                } else {
                    se.iter().any(|&(dx, dy)| self.at(x + dx, y + dy))
                };
            }
        }
        self.bits = next;
    }

    fn crop(&self, width: u32, height: u32) -> BinaryMask {
        BinaryMask::from_fn(width, height, |x, y| self.bits[((y as i64 + self.pad) * self.w + x as i64 + self.pad) as usize])
    }
}

/// Binary morphology with a disk structuring element.
///
/// `iters` repeats the primitive: `open` erodes `iters` times then dilates
/// `iters` times, `close` the reverse.
pub fn morphology(mask: &BinaryMask, op: MorphOp, radius: u32, iters: u32) -> Result<BinaryMask> {
    if radius == 0 || iters == 0 {
        return Err(ImagingError::InvalidParameter(format!(
            "morphology requires radius >= 1 and iters >= 1 (got {radius}, {iters})"
        )));
    }
    let se = disk_offsets(radius);
    let pad = radius as i64 * iters as i64;
    let mut grid = Padded::from_mask(mask, pad);
    let plan: &[bool] = match op {
        MorphOp::Erode => &[true],
        MorphOp::Dilate => &[false],
        MorphOp::Open => &[true, false],
        MorphOp::Close => &[false, true],
    };
    for &erode in plan {
        for _ in 0..iters {
            grid.step(&se, erode);
        }
    }
    Ok(grid.crop(mask.width(), mask.height()))
}
