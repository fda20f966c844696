//! Per-pixel class probability and label maps.

use alloc::{format, vec::Vec};

use crate::{Error, Result};

/// Label value for unlabeled or rejected pixels.
pub const IGNORE_LABEL: u8 = 255;

/// Per-pixel normalization tolerance accepted on construction.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-5;

/// Softmax output of a segmentation network, `H x W x K`, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMap {
    height: usize,
    width: usize,
    classes: usize,
    probs: Vec<f64>,
}

impl PredictionMap {
    /// Validates shape, non-negativity and per-pixel normalization.
    pub fn new(height: usize, width: usize, classes: usize, probs: Vec<f64>) -> Result<Self> {
        check_shape(height, width, classes, probs.len())?;
        for (index, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if p < 0.0 {
                return Err(Error::OutOfRange { index, value: p, min: 0.0, max: 1.0 });
            }
        }
        for (pixel, row) in probs.chunks_exact(classes).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::NotNormalized { pixel, sum });
            }
        }
        Ok(Self { height, width, classes, probs })
    }

    /// Normalizes non-negative per-pixel scores so each pixel sums to one.
    pub fn from_scores(height: usize, width: usize, classes: usize, mut scores: Vec<f64>) -> Result<Self> {
        check_shape(height, width, classes, scores.len())?;
        for (pixel, row) in scores.chunks_exact_mut(classes).enumerate() {
            let sum: f64 = row.iter().sum();
            if !sum.is_finite() || sum <= 0.0 || row.iter().any(|&s| s < 0.0) {
                return Err(Error::NotNormalized { pixel, sum });
            }
            for s in row.iter_mut() {
                *s /= sum;
            }
        }
        Self::new(height, width, classes, scores)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Class distribution of the pixel at flat index `pixel`.
    #[inline]
    pub fn pixel(&self, pixel: usize) -> &[f64] {
        &self.probs[pixel * self.classes..(pixel + 1) * self.classes]
    }

    pub fn pixel_rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.probs.chunks_exact(self.classes)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.height, self.width, self.classes) == (other.height, other.width, other.classes)
    }
}

/// Integer class map, `H x W`. Values are class indices or [`IGNORE_LABEL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions(format!("{height}x{width} has zero area")));
        }
        if labels.len() != height * width {
            return Err(Error::InvalidDimensions(format!(
                "{height}x{width} label map needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self { height, width, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    /// Fails on the first non-ignore label `>= classes`.
    pub fn check_classes(&self, classes: usize) -> Result<()> {
        match self
            .labels
            .iter()
            .position(|&l| l != IGNORE_LABEL && usize::from(l) >= classes)
        {
            Some(pixel) => Err(Error::LabelOutOfRange { pixel, label: self.labels[pixel], classes }),
            None => Ok(()),
        }
    }
}

fn check_shape(height: usize, width: usize, classes: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimensions(format!("{height}x{width} has zero area")));
    }
    // class indices must fit below the ignore label
    if classes == 0 || classes > usize::from(IGNORE_LABEL) {
        return Err(Error::InvalidDimensions(format!("class count {classes} not in 1..=255")));
    }
    if len != height * width * classes {
        return Err(Error::InvalidDimensions(format!(
            "{height}x{width}x{classes} map needs {} values, got {len}",
            height * width * classes
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn prediction_map_validation() {
        assert!(PredictionMap::new(1, 1, 2, vec![0.5, 0.5]).is_ok());
        assert!(matches!(
            PredictionMap::new(1, 1, 2, vec![0.5, 0.6]),
            Err(Error::NotNormalized { pixel: 0, .. })
        ));
        assert!(PredictionMap::new(1, 1, 2, vec![1.5, -0.5]).is_err());
        assert!(PredictionMap::new(1, 1, 2, vec![f64::NAN, 1.0]).is_err());
        assert!(PredictionMap::new(1, 1, 256, vec![1.0 / 256.0; 256]).is_err());
    }

    #[test]
    fn scores_are_normalized() {
        let m = PredictionMap::from_scores(1, 2, 2, vec![1.0, 3.0, 2.0, 2.0]).unwrap();
        assert_eq!(m.probs(), &[0.25, 0.75, 0.5, 0.5]);
        assert!(PredictionMap::from_scores(1, 1, 2, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn label_classes_checked() {
        let l = LabelMap::new(1, 3, vec![0, 2, IGNORE_LABEL]).unwrap();
        assert!(l.check_classes(3).is_ok());
        assert_eq!(
            l.check_classes(2),
            Err(Error::LabelOutOfRange { pixel: 1, label: 2, classes: 2 })
        );
    }
}
