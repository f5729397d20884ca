use super::{connected_components, histogram, BinaryMask, Connectivity, ImagingError, Raster, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BrightRegion {
    pub mask: BinaryMask,
    pub centroid: (f64, f64),
    pub radius: f64,
}

/// Locates the largest bright blob, used as the optic disc estimate.
///
/// The cut is the smallest intensity `v` whose cumulative share of pixels
/// reaches `quantile`; pixels `>= v` form the candidate mask and its largest
/// 8-connected component (first by label on ties) is returned with
/// `radius = sqrt(area / π)`.
pub fn brightest_region(img: &Raster, quantile: f64) -> Result<BrightRegion> {
    img.require_channels(1)?;
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(ImagingError::InvalidParameter(format!("quantile {quantile} outside (0, 1)")));
    }
    let hist = histogram(img);
    let target = quantile * img.pixel_count() as f64;
    let mut cum = 0u64;
    let mut cut = 255u8;
    for (v, &c) in hist.iter().enumerate() {
        cum += c;
        if cum as f64 >= target {
            cut = v as u8;
            break;
        }
    }
    let bits = img.data().iter().map(|&p| p >= cut).collect();
    let candidate = BinaryMask::from_bits(img.width(), img.height(), bits)?;
    let regions = connected_components(&candidate, Connectivity::Eight, None);
    let largest = regions
        .iter()
        .fold(None::<&super::LabeledRegion>, |best, r| match best {
            Some(b) if b.area >= r.area => Some(b),
            _ => Some(r),
        })
        .ok_or(ImagingError::NoBrightRegion)?;
    Ok(BrightRegion {
        mask: largest.mask(img.width(), img.height()),
        centroid: largest.centroid,
        radius: (largest.area as f64 / std::f64::consts::PI).sqrt(),
    })
}

/// Clears every set pixel within `margin_factor * radius` of `center`.
pub fn exclude_disk(mask: &BinaryMask, center: (f64, f64), radius: f64, margin_factor: f64) -> Result<BinaryMask> {
    if !(radius > 0.0) || !(margin_factor >= 1.0) {
        return Err(ImagingError::InvalidParameter(format!(
            "exclude_disk needs radius > 0 and margin >= 1 (got {radius}, {margin_factor})"
        )));
    }
    let r = radius * margin_factor;
    let r2 = r * r;
    let mut out = mask.clone();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let (dx, dy) = (x as f64 - center.0, y as f64 - center.1);
            if dx * dx + dy * dy <= r2 {
                out.set(x, y, false);
            }
        }
    }
    Ok(out)
}
