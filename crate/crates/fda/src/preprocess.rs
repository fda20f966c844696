//! Resize and crop applied to decoded images before the transfer.
//!
//! Values stay in pixel units throughout.

use fda_core::RasterImage;
use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::pairing::bounded;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PreprocessPolicy {
    /// Bilinear resize to `(height, width)` first.
    pub resize: Option<(usize, usize)>,
    /// Then a random crop of `(height, width)`.
    pub crop: Option<(usize, usize)>,
}

/// Bilinear resize with pixel-center alignment and edge clamping. Returns an
/// exact copy when the size does not change.
pub fn resize_bilinear(image: &RasterImage, height: usize, width: usize) -> Result<RasterImage> {
    check_area(height, width)?;
    let (h, w, c) = image.dims();
    if (h, w) == (height, width) {
        return Ok(image.clone());
    }
    let rows = axis_weights(h, height);
    let cols = axis_weights(w, width);
    let src = image.samples();
    let mut out = Vec::with_capacity(height * width * c);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            for ch in 0..c {
                let at = |r: usize, col: usize| src[(r * w + col) * c + ch];
                let top = at(r0, c0) + (at(r0, c1) - at(r0, c0)) * fc;
                let bottom = at(r1, c0) + (at(r1, c1) - at(r1, c0)) * fc;
                out.push(top + (bottom - top) * fr);
            }
        }
    }
    Ok(RasterImage::new(height, width, c, out)?)
}

/// `(lower index, upper index, upper weight)` for every output position.
fn axis_weights(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, x - lo as f64)
        })
        .collect()
}

/// Crop of `height x width` at a uniformly drawn offset.
pub fn random_crop(image: &RasterImage, height: usize, width: usize, rng: &mut impl RngCore) -> Result<RasterImage> {
    check_area(height, width)?;
    let (h, w, c) = image.dims();
    if height > h || width > w {
        return Err(Error::Usage(format!("crop {height}x{width} is larger than the {h}x{w} image")));
    }
    let top = bounded(rng, (h - height + 1) as u64) as usize;
    let left = bounded(rng, (w - width + 1) as u64) as usize;
    let samples = image.samples();
    let mut out = Vec::with_capacity(height * width * c);
    for r in top..top + height {
        let start = (r * w + left) * c;
        out.extend_from_slice(&samples[start..start + width * c]);
    }
    Ok(RasterImage::new(height, width, c, out)?)
}

pub fn preprocess(image: RasterImage, policy: &PreprocessPolicy, rng: &mut impl RngCore) -> Result<RasterImage> {
    let resized = match policy.resize {
        Some((h, w)) => resize_bilinear(&image, h, w)?,
        None => image,
    };
    match policy.crop {
        Some((h, w)) => random_crop(&resized, h, w, rng),
        None => Ok(resized),
    }
}

fn check_area(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Usage(format!("target size {height}x{width} has zero area")));
    }
    Ok(())
}

/// Parses `HxW`, e.g. `512x1024`.
pub fn parse_size(text: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = text.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {text:?}"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("bad height in {text:?}: {e}"))?;
    let w: usize = w.trim().parse().map_err(|e| format!("bad width in {text:?}: {e}"))?;
    if h == 0 || w == 0 {
        return Err(format!("size {text:?} has zero area"));
    }
    Ok((h, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::{item_rng, Purpose};

    #[test]
    fn checkerboard_upscale() {
        let img = RasterImage::new(2, 2, 1, vec![0.0, 255.0, 255.0, 0.0]).unwrap();
        let up = resize_bilinear(&img, 4, 4).unwrap();
        // sample positions -0.25, 0.25, 0.75, 1.25 clamp to 0, 0.25, 0.75, 1
        let axis = [0.0, 0.25, 0.75, 1.0];
        for (r, &y) in axis.iter().enumerate() {
            for (c, &x) in axis.iter().enumerate() {
                let expected = 255.0 * (x * (1.0 - y) + y * (1.0 - x));
                assert!((up.get(r, c, 0) - expected).abs() < 1e-12, "({r},{c})");
            }
        }
    }

    #[test]
    fn same_size_is_identity_and_sizes_follow_policy() {
        let img = RasterImage::from_fn(9, 13, 3, |h, w, c| ((h * w + c) % 256) as f64).unwrap();
        assert_eq!(resize_bilinear(&img, 9, 13).unwrap(), img);
        let big = RasterImage::zeros(1052, 1914, 3).unwrap();
        assert_eq!(resize_bilinear(&big, 720, 1280).unwrap().dims(), (720, 1280, 3));
        assert!(resize_bilinear(&img, 0, 5).is_err());
    }

    #[test]
    fn constant_stays_constant_and_in_range() {
        let img = RasterImage::new(3, 5, 1, vec![255.0; 15]).unwrap();
        let out = resize_bilinear(&img, 7, 2).unwrap();
        assert!(out.samples().iter().all(|&v| v == 255.0));
    }

    #[test]
    fn crop_is_seeded() {
        let img = RasterImage::from_fn(20, 30, 1, |h, w, _| (h * 30 + w) as f64 / 3.0).unwrap();
        let policy = PreprocessPolicy { resize: None, crop: Some((5, 6)) };
        let a = preprocess(img.clone(), &policy, &mut item_rng(7, Purpose::Crop, 0, 4)).unwrap();
        let b = preprocess(img.clone(), &policy, &mut item_rng(7, Purpose::Crop, 0, 4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dims(), (5, 6, 1));
        let origin = a.get(0, 0, 0) * 3.0;
        let (top, left) = (origin as usize / 30, origin as usize % 30);
        assert_eq!(a.get(4, 5, 0), ((top + 4) * 30 + left + 5) as f64 / 3.0);
        assert!(random_crop(&img, 21, 2, &mut item_rng(0, Purpose::Crop, 0, 0)).is_err());
    }

    #[test]
    fn size_parsing() {
        assert_eq!(parse_size("512x1024"), Ok((512, 1024)));
        assert!(parse_size("0x4").is_err());
        assert!(parse_size("512").is_err());
    }
}
