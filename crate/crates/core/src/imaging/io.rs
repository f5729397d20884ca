use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::{BinaryMask, ImagingError, Raster, Result};

fn png_err(path: &Path, e: impl std::fmt::Display) -> ImagingError {
    ImagingError::Png(format!("{}: {e}", path.display()))
}

/// Reads an 8-bit grayscale or RGB PNG. Alpha channels are dropped and
/// palettes/low bit depths expanded.
pub fn read_png(path: &Path) -> Result<Raster> {
    let file = File::open(path).map_err(|e| png_err(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| png_err(path, "image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width, info.height);
    let (channels, data) = match info.color_type {
        png::ColorType::Grayscale => (1, buf),
        png::ColorType::Rgb => (3, buf),
        png::ColorType::GrayscaleAlpha => (1, buf.chunks_exact(2).map(|p| p[0]).collect()),
        png::ColorType::Rgba => (3, buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect()),
        other => return Err(png_err(path, format!("unsupported color type {other:?}"))),
    };
    Raster::new(w, h, channels, data)
}

pub fn write_png(path: &Path, img: &Raster) -> Result<()> {
    let file = File::create(path).map_err(|e| png_err(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width(), img.height());
    encoder.set_color(if img.channels() == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| png_err(path, e))?;
    writer.write_image_data(img.data()).map_err(|e| png_err(path, e))?;
    writer.finish().map_err(|e| png_err(path, e))
}

/// Masks are stored as 0/255 grayscale; any nonzero pixel reads back as set.
pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<()> {
    let data = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_png(path, &Raster::new(mask.width(), mask.height(), 1, data)?)
}

pub fn read_mask_png(path: &Path) -> Result<BinaryMask> {
    let img = read_png(path)?;
    let bits = img.data().chunks_exact(img.channels() as usize).map(|p| p[0] != 0).collect();
    BinaryMask::from_bits(img.width(), img.height(), bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = Raster::new(3, 2, 3, (0..18).map(|v| v * 13).collect()).unwrap();
        let p = dir.path().join("rgb.png");
        write_png(&p, &rgb).unwrap();
        assert_eq!(read_png(&p).unwrap(), rgb);

        let mask = BinaryMask::from_fn(5, 4, |x, y| (x + y) % 3 == 0);
        let p = dir.path().join("mask.png");
        write_mask_png(&p, &mask).unwrap();
        assert_eq!(read_mask_png(&p).unwrap(), mask);
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(matches!(read_png(Path::new("/nonexistent/x.png")), Err(ImagingError::Png(_))));
    }
}
