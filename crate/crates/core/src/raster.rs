use alloc::{format, vec, vec::Vec};

use crate::{Error, Result};

/// Largest valid intensity. Transfers operate on raw `[0, 255]` values.
pub const MAX_INTENSITY: f64 = 255.0;

/// Row-major, channel-last image with real samples.
///
/// Construction guarantees `H, W >= 1`, `C` in `{1, 3}` and finite samples.
/// The `[0, 255]` range is only required for images entering a transfer,
/// so unclamped reconstructions can still be represented.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    samples: Vec<f64>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, samples: Vec<f64>) -> Result<Self> {
        check_dims(height, width, channels)?;
        if samples.len() != height * width * channels {
            return Err(Error::InvalidDimensions(format!(
                "{height}x{width}x{channels} image needs {} samples, got {}",
                height * width * channels,
                samples.len()
            )));
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { height, width, channels, samples })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        check_dims(height, width, channels)?;
        Ok(Self { height, width, channels, samples: vec![0.0; height * width * channels] })
    }

    /// Builds an image from `f(row, col, channel)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(height, width, channels)?;
        let mut samples = Vec::with_capacity(height * width * channels);
        for h in 0..height {
            for w in 0..width {
                for c in 0..channels {
                    samples.push(f(h, w, c));
                }
            }
        }
        Self::new(height, width, channels, samples)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.samples[(row * self.width + col) * self.channels + channel]
    }

    /// Copies one channel out as a row-major `H x W` plane.
    pub fn channel_plane(&self, channel: usize) -> Vec<f64> {
        assert!(channel < self.channels, "channel {channel} out of range");
        self.samples.iter().skip(channel).step_by(self.channels).copied().collect()
    }

    /// Interleaves per-channel planes back into an image.
    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        check_dims(height, width, channels)?;
        let mut samples = vec![0.0; height * width * channels];
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != height * width {
                return Err(Error::DimensionMismatch(format!(
                    "plane {c} has {} samples, expected {}",
                    plane.len(),
                    height * width
                )));
            }
            for (i, &v) in plane.iter().enumerate() {
                samples[i * channels + c] = v;
            }
        }
        Self::new(height, width, channels, samples)
    }

    /// Fails on the first sample outside `[0, 255]`.
    pub fn check_intensity_range(&self) -> Result<()> {
        match self.samples.iter().position(|v| !(0.0..=MAX_INTENSITY).contains(v)) {
            Some(index) => Err(Error::OutOfRange {
                index,
                value: self.samples[index],
                min: 0.0,
                max: MAX_INTENSITY,
            }),
            None => Ok(()),
        }
    }

    /// Clamps every sample into `[0, 255]` and returns how many were moved.
    pub fn clamp_intensities(&mut self) -> usize {
        let mut clipped = 0;
        for v in self.samples.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                clipped += 1;
            } else if *v > MAX_INTENSITY {
                *v = MAX_INTENSITY;
                clipped += 1;
            }
        }
        clipped
    }

    /// Rounds and clamps to 8-bit values.
    pub fn to_u8(&self) -> Vec<u8> {
        self.samples.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, channels, bytes.iter().map(|&b| f64::from(b)).collect())
    }
}

/// Nearest 8-bit level, halves rounded away from zero, saturating.
#[inline]
pub fn quantize(v: f64) -> u8 {
    let v = v.clamp(0.0, MAX_INTENSITY);
    let whole = v as u8;
    if v - f64::from(whole) >= 0.5 {
        whole + 1
    } else {
        whole
    }
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimensions(format!("{height}x{width} has zero area")));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidDimensions(format!("{channels} channels, expected 1 or 3")));
    }
    Ok(())
}
