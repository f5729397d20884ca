use serde::{Deserialize, Serialize};

use super::{ImagingError, Result};

/// Row-major 8-bit raster with one or three interleaved channels.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish()
    }
}

impl Raster {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidDimensions(format!("{width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(ImagingError::InvalidChannelCount { expected: 1, actual: channels });
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImagingError::InvalidDimensions(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn gray_from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn get(&self, x: u32, y: u32, c: u8) -> u8 {
        self.data[(y as usize * self.width as usize + x as usize) * self.channels as usize + c as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: u8, v: u8) {
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize + c as usize;
        self.data[idx] = v;
    }

    pub(crate) fn require_channels(&self, n: u8) -> Result<()> {
        if self.channels != n {
            return Err(ImagingError::InvalidChannelCount { expected: n, actual: self.channels });
        }
        Ok(())
    }
}

/// Per-pixel luma, `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_grayscale(img: &Raster) -> Result<Raster> {
    img.require_channels(3)?;
    // Fixed-point weights scaled by 1000 keep the rounding exact.
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| {
            let acc = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
            ((acc + 500) / 1000) as u8
        })
        .collect();
    Raster::new(img.width, img.height, 1, data)
}

pub fn extract_channel(img: &Raster, idx: usize) -> Result<Raster> {
    if idx >= 3 {
        return Err(ImagingError::InvalidChannelIndex(idx));
    }
    img.require_channels(3)?;
    let data = img.data.chunks_exact(3).map(|p| p[idx]).collect();
    Raster::new(img.width, img.height, 1, data)
}

#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(ImagingError::InvalidDimensions(format!(
                "mask length {} != {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_shape(&self, other: &BinaryMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(ImagingError::ShapeMismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }

    /// Pixelwise union; shapes must match.
    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.same_shape(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        Ok(BinaryMask { width: self.width, height: self.height, bits })
    }

    /// Tight bounding box of set pixels.
    pub fn bounding_box(&self) -> Option<Box> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        (x0 != u32::MAX).then_some(Box { x0, y0, x1, y1 })
    }
}

/// Axis-aligned box; top-left inclusive, bottom-right exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Box {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Box {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x1 <= x0 || y1 <= y0 {
            return Err(ImagingError::InvalidParameter(format!("degenerate box ({x0},{y0},{x1},{y1})")));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn intersection_area(&self, other: &Box) -> u64 {
        let w = self.x1.min(other.x1).saturating_sub(self.x0.max(other.x0));
        let h = self.y1.min(other.y1).saturating_sub(self.y0.max(other.y0));
        w as u64 * h as u64
    }

    /// Rasterizes the box into a mask of the given size, clipped to its bounds.
    pub fn to_mask(&self, width: u32, height: u32) -> BinaryMask {
        BinaryMask::from_fn(width, height, |x, y| x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1)
    }
}
