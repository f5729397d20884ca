use serde::{Deserialize, Serialize};

use super::{BinaryMask, Raster, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Above,
    Below,
}

pub fn histogram(img: &Raster) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    hist
}

/// Otsu's threshold over the 256-bin histogram.
///
/// Returns the `t` maximizing between-class variance for the split
/// `{p <= t} | {p > t}`; ties go to the smallest `t`. A constant image
/// returns its value, so `{p > t}` is empty.
pub fn otsu_threshold(img: &Raster) -> Result<u8> {
    img.require_channels(1)?;
    let hist = histogram(img);
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();

    let mut best: Option<(u8, f64)> = None;
    let (mut w0, mut sum0) = (0u64, 0f64);
    for t in 0..256usize {
        w0 += hist[t];
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let mu0 = sum0 / w0 as f64;
        let mu1 = (sum_all - sum0) / w1 as f64;
        let var = w0 as f64 * w1 as f64 * (mu0 - mu1) * (mu0 - mu1);
        if best.is_none_or(|(_, b)| var > b) {
            best = Some((t as u8, var));
        }
    }
    Ok(match best {
        Some((t, _)) => t,
        // single occupied bin
        None => hist.iter().position(|&c| c > 0).unwrap_or(0) as u8,
    })
}

pub fn threshold(img: &Raster, t: u8, polarity: Polarity) -> Result<BinaryMask> {
    img.require_channels(1)?;
    let bits = img
        .data()
        .iter()
        .map(|&p| match polarity {
            Polarity::Above => p > t,
            Polarity::Below => p < t,
        })
        .collect();
    BinaryMask::from_bits(img.width(), img.height(), bits)
}
