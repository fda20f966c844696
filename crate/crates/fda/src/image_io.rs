//! PNG/JPEG decode into [`RasterImage`] and 8-bit PNG encode.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use fda_core::RasterImage;
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ColorType, DynamicImage, ImageEncoder, ImageReader};

use crate::{Error, Result};

/// Decodes an image file. Gray inputs stay single channel, everything else
/// becomes RGB with alpha dropped. 16-bit inputs are reduced to 8 bits.
pub fn read_image(path: &Path) -> Result<RasterImage> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    Ok(from_dynamic(img)?)
}

pub fn decode_image(bytes: &[u8]) -> Result<RasterImage> {
    let img = image::load_from_memory(bytes)
        .map_err(|source| Error::Image { path: "<memory>".into(), source })?;
    Ok(from_dynamic(img)?)
}

fn from_dynamic(img: DynamicImage) -> fda_core::Result<RasterImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        RasterImage::from_u8(h, w, 3, img.into_rgb8().as_raw())
    } else {
        RasterImage::from_u8(h, w, 1, img.into_luma8().as_raw())
    }
}

/// 8-bit PNG bytes: values are rounded and saturated to `[0, 255]`.
pub fn encode_png(image: &RasterImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_png_to(image, &mut out).map_err(|source| Error::Image { path: "<memory>".into(), source })?;
    Ok(out)
}

pub fn write_png(image: &RasterImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_png_to(image, &mut writer).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    writer.flush().map_err(|e| Error::io(path, e))
}

fn write_png_to(image: &RasterImage, out: impl Write) -> image::ImageResult<()> {
    let (h, w, c) = image.dims();
    let color = if c == 1 { ColorType::L8 } else { ColorType::Rgb8 };
    PngEncoder::new_with_quality(out, CompressionType::Fast, FilterType::Adaptive).write_image(
        &image.to_u8(),
        w as u32,
        h as u32,
        color.into(),
    )
}
