use super::{histogram, ImagingError, Raster, Result};

/// Tile layout for CLAHE: `nx` columns by `ny` rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub nx: u32,
    pub ny: u32,
}

impl TileGrid {
    pub fn new(nx: u32, ny: u32) -> Self {
        Self { nx, ny }
    }
}

/// Pixel span `[start, end)` of tile `i` out of `n` along an axis of `len` pixels.
fn tile_span(i: u32, n: u32, len: u32) -> (u32, u32) {
    let start = (i as u64 * len as u64 / n as u64) as u32;
    let end = ((i as u64 + 1) * len as u64 / n as u64) as u32;
    (start, end)
}

fn tile_center(i: u32, n: u32, len: u32) -> f64 {
    let (s, e) = tile_span(i, n, len);
    (s as f64 + e as f64 - 1.0) / 2.0
}

fn validate(img: &Raster, clip_limit: f64, tiles: TileGrid) -> Result<()> {
    img.require_channels(1)?;
    if !(clip_limit >= 1.0) {
        return Err(ImagingError::InvalidParameter(format!("clip_limit {clip_limit} < 1.0")));
    }
    if tiles.nx == 0 || tiles.ny == 0 || tiles.nx > img.width() || tiles.ny > img.height() {
        return Err(ImagingError::InvalidParameter(format!(
            "tile grid {}x{} does not fit a {}x{} image",
            tiles.nx,
            tiles.ny,
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

fn tile_lut(img: &Raster, clip_limit: f64, x: (u32, u32), y: (u32, u32)) -> [f64; 256] {
    let mut hist = [0f64; 256];
    for yy in y.0..y.1 {
        for xx in x.0..x.1 {
            hist[img.get(xx, yy, 0) as usize] += 1.0;
        }
    }
    let pixels = ((x.1 - x.0) * (y.1 - y.0)) as f64;
    let cap = clip_limit * pixels / 256.0;
    let mut excess = 0.0;
    for h in hist.iter_mut() {
        if *h > cap {
            excess += *h - cap;
            *h = cap;
        }
    }
    // single uniform redistribution pass
    let share = excess / 256.0;
    let mut lut = [0f64; 256];
    let mut cdf = 0.0;
    for (v, h) in hist.iter().enumerate() {
        cdf += h + share;
        lut[v] = 255.0 * cdf / pixels;
    }
    lut
}

/// Per-tile intensity mappings in row-major tile order, before interpolation.
pub fn clahe_tile_luts(img: &Raster, clip_limit: f64, tiles: TileGrid) -> Result<Vec<[f64; 256]>> {
    validate(img, clip_limit, tiles)?;
    let mut luts = Vec::with_capacity((tiles.nx * tiles.ny) as usize);
    for ty in 0..tiles.ny {
        let ys = tile_span(ty, tiles.ny, img.height());
        for tx in 0..tiles.nx {
            let xs = tile_span(tx, tiles.nx, img.width());
            luts.push(tile_lut(img, clip_limit, xs, ys));
        }
    }
    Ok(luts)
}

/// Neighbouring tile indices and the weight of the second one along an axis.
fn axis_weights(p: u32, n: u32, len: u32) -> (u32, u32, f64) {
    let pf = p as f64;
    if n == 1 || pf <= tile_center(0, n, len) {
        return (0, 0, 0.0);
    }
    if pf >= tile_center(n - 1, n, len) {
        return (n - 1, n - 1, 0.0);
    }
    let mut i = 0;
    while tile_center(i + 1, n, len) < pf {
        i += 1;
    }
    let (c0, c1) = (tile_center(i, n, len), tile_center(i + 1, n, len));
    (i, i + 1, (pf - c0) / (c1 - c0))
}

/// Contrast-limited adaptive histogram equalization.
///
/// Each tile's histogram is clipped at `clip_limit * tile_pixels / 256`, the
/// excess is spread evenly over all bins once, and the tile CDF becomes its
/// mapping. Output pixels bilinearly blend the four nearest tile mappings.
pub fn clahe(img: &Raster, clip_limit: f64, tiles: TileGrid) -> Result<Raster> {
    let luts = clahe_tile_luts(img, clip_limit, tiles)?;
    // Constant input short-circuits so that blending never perturbs the value.
    let hist = histogram(img);
    if hist.iter().filter(|&&c| c > 0).count() == 1 {
        let v = img.data()[0] as usize;
        let out = luts[0][v].round().clamp(0.0, 255.0) as u8;
        return Raster::filled(img.width(), img.height(), 1, out);
    }

    let xw: Vec<_> = (0..img.width()).map(|x| axis_weights(x, tiles.nx, img.width())).collect();
    let yw: Vec<_> = (0..img.height()).map(|y| axis_weights(y, tiles.ny, img.height())).collect();
    let nx = tiles.nx as usize;
    let mut data = Vec::with_capacity(img.pixel_count());
    for (y, &(ty0, ty1, wy)) in yw.iter().enumerate() {
        for (x, &(tx0, tx1, wx)) in xw.iter().enumerate() {
            let v = img.get(x as u32, y as u32, 0) as usize;
            let at = |tx: u32, ty: u32| luts[ty as usize * nx + tx as usize][v];
            let top = at(tx0, ty0) * (1.0 - wx) + at(tx1, ty0) * wx;
            let bottom = at(tx0, ty1) * (1.0 - wx) + at(tx1, ty1) * wx;
            let blended = if wy == 0.0 { top } else { top * (1.0 - wy) + bottom * wy };
            data.push(blended.round().clamp(0.0, 255.0) as u8);
        }
    }
    Raster::new(img.width(), img.height(), 1, data)
}
