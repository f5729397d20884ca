//! Deterministic 8-bit raster primitives.
//!
//! Everything here is a pure function of its inputs. Extraction plans are
//! composed from these operations.

mod clahe;
mod components;
mod disc;
mod io;
mod iou;
mod morphology;
mod raster;
mod threshold;

pub use clahe::{clahe, clahe_tile_luts, TileGrid};
pub use components::{connected_components, Connectivity, LabeledRegion};
pub use disc::{brightest_region, exclude_disk, BrightRegion};
pub use io::{read_mask_png, read_png, write_mask_png, write_png};
pub use iou::{box_iou, greedy_match, mask_iou};
pub use morphology::{disk_offsets, morphology, MorphOp};
pub use raster::{extract_channel, to_grayscale, BinaryMask, Box, Raster};
pub use threshold::{histogram, otsu_threshold, threshold, Polarity};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImagingError {
    #[error("expected {expected}-channel raster, got {actual} channels")]
    InvalidChannelCount { expected: u8, actual: u8 },
    #[error("channel index {0} out of range (must be < 3)")]
    InvalidChannelIndex(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),
    #[error("no bright region found above the quantile cut")]
    NoBrightRegion,
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("png: {0}")]
    Png(String),
}

pub type Result<T> = std::result::Result<T, ImagingError>;
