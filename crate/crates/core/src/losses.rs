//! Segmentation loss kernels evaluated on prediction and label maps.
//!
//! Natural log throughout, entropy is not normalized by `ln K`. Pixel
//! reductions run in a fixed sequential order so repeated evaluations agree
//! bit for bit.

use alloc::{format, vec::Vec};

use crate::maps::{LabelMap, PredictionMap, IGNORE_LABEL};
use crate::{Error, Result};

/// Floor applied to probabilities before taking a log in cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// Additive constant inside the Charbonnier penalty.
pub const CHARBONNIER_EPSILON: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Mean over valid pixels.
    #[default]
    Mean,
    /// Plain sum over valid pixels.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Charbonnier exponent.
    pub eta: f64,
    /// Weight of the target entropy term.
    pub lambda_ent: f64,
    pub epsilon: f64,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { eta: 2.0, lambda_ent: 0.005, epsilon: CHARBONNIER_EPSILON, reduction: Reduction::Mean }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(Error::InvalidParameter(format!("eta must be > 0, got {}", self.eta)));
        }
        if !self.lambda_ent.is_finite() || self.lambda_ent < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lambda_ent must be >= 0, got {}",
                self.lambda_ent
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

fn reduce(sum: f64, count: usize, reduction: Reduction) -> f64 {
    match reduction {
        Reduction::Mean => sum / count as f64,
        Reduction::Sum => sum,
    }
}

/// `-ln p(label)` reduced over pixels whose label is not ignored.
pub fn cross_entropy(pred: &PredictionMap, labels: &LabelMap, reduction: Reduction) -> Result<f64> {
    if (pred.height(), pred.width()) != (labels.height(), labels.width()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {}x{}, labels are {}x{}",
            pred.height(),
            pred.width(),
            labels.height(),
            labels.width()
        )));
    }
    labels.check_classes(pred.classes())?;
    let mut sum = 0.0;
    let mut count = 0;
    for (row, &label) in pred.pixel_rows().zip(labels.labels()) {
        if label == IGNORE_LABEL {
            continue;
        }
        sum -= libm::log(row[usize::from(label)].max(PROB_FLOOR));
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyReduction);
    }
    Ok(reduce(sum, count, reduction))
}

/// Shannon entropy of one distribution, `0·ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * libm::log(p)).sum::<f64>()
}

/// Per-pixel entropy, row-major `H x W`.
pub fn pixel_entropy(pred: &PredictionMap) -> Vec<f64> {
    pred.pixel_rows().map(entropy).collect()
}

/// `ρ(x) = (x² + 0.001²)^η`
pub fn charbonnier(x: f64, eta: f64) -> f64 {
    charbonnier_with_epsilon(x, eta, CHARBONNIER_EPSILON)
}

pub fn charbonnier_with_epsilon(x: f64, eta: f64, epsilon: f64) -> f64 {
    libm::pow(x * x + epsilon * epsilon, eta)
}

/// `dρ/dx = 2ηx (x² + ε²)^(η-1)`
pub fn charbonnier_derivative(x: f64, eta: f64, epsilon: f64) -> f64 {
    2.0 * eta * x * libm::pow(x * x + epsilon * epsilon, eta - 1.0)
}

/// Charbonnier-weighted entropy, reduced over all pixels.
pub fn robust_entropy(pred: &PredictionMap, cfg: &LossConfig) -> f64 {
    let sum: f64 = pred
        .pixel_rows()
        .map(|row| charbonnier_with_epsilon(entropy(row), cfg.eta, cfg.epsilon))
        .sum();
    reduce(sum, pred.pixels(), cfg.reduction)
}

/// Gradient of [`robust_entropy`] with respect to every probability entry,
/// treating entries as independent inputs (no renormalization).
///
/// Entries equal to zero get the one-sided limit with `p ln p -> 0`, which
/// is `+∞` in the entropy direction; they are reported as `f64::INFINITY`
/// scaled by `ρ'`, or 0 when `ρ'` vanishes.
pub fn robust_entropy_grad(pred: &PredictionMap, cfg: &LossConfig) -> Vec<f64> {
    let scale = match cfg.reduction {
        Reduction::Mean => 1.0 / pred.pixels() as f64,
        Reduction::Sum => 1.0,
    };
    let mut grad = Vec::with_capacity(pred.probs().len());
    for row in pred.pixel_rows() {
        let h = entropy(row);
        let outer = charbonnier_derivative(h, cfg.eta, cfg.epsilon) * scale;
        for &p in row {
            // d(-p ln p)/dp = -(ln p + 1)
            let inner = if p > 0.0 { -(libm::log(p) + 1.0) } else { f64::INFINITY };
            grad.push(if outer == 0.0 { 0.0 } else { outer * inner });
        }
    }
    grad
}

/// Source cross-entropy plus weighted target entropy.
pub fn combined_loss(src_ce: f64, tgt_ent: f64, cfg: &LossConfig) -> f64 {
    debug_assert!(src_ce.is_finite() && tgt_ent.is_finite());
    src_ce + cfg.lambda_ent * tgt_ent
}

/// [`combined_loss`] plus cross-entropy against pseudo labels.
pub fn sst_loss(src_ce: f64, tgt_ent: f64, pseudo_ce: f64, cfg: &LossConfig) -> f64 {
    debug_assert!(pseudo_ce.is_finite());
    combined_loss(src_ce, tgt_ent, cfg) + pseudo_ce
}
