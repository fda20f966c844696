//! Multi-band pseudo labels and mIoU.
//!
//! Predictions of models trained with different β bands are averaged per
//! pixel, the argmax becomes the candidate label, and a candidate is kept
//! when its confidence is above a fixed floor or within the top fraction of
//! confidences of its class. Rejected pixels get [`IGNORE_LABEL`].
//!
//! Thresholding is two-pass: [`ConfidencePool`] collects per-class
//! confidences (pools can be filled per image and merged in any order), then
//! [`apply_thresholds`] labels each image.

use alloc::{format, vec, vec::Vec};

use crate::maps::{LabelMap, PredictionMap, IGNORE_LABEL};
use crate::{Error, Result};

/// Slack used when turning `top_fraction · n` into a count, so that e.g.
/// `0.66 · 100` keeps 66 and not 67 because of binary rounding.
const COUNT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdScope {
    /// Class quantiles over every pixel of every image in the batch.
    #[default]
    PerClassOverBatch,
    /// Class quantiles computed separately for each image.
    PerImage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub top_fraction: f64,
    pub confidence_floor: f64,
    pub scope: ThresholdScope,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { top_fraction: 0.66, confidence_floor: 0.9, scope: ThresholdScope::PerClassOverBatch }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "top_fraction must be in (0, 1], got {}",
                self.top_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(Error::InvalidParameter(format!(
                "confidence_floor must be in [0, 1], got {}",
                self.confidence_floor
            )));
        }
        Ok(())
    }
}

/// Per-pixel arithmetic mean of `M` prediction maps.
pub fn mean_prediction(preds: &[PredictionMap]) -> Result<PredictionMap> {
    let first = preds.first().ok_or_else(|| Error::Empty("no predictions to average".into()))?;
    if let Some(bad) = preds.iter().position(|p| !p.same_shape(first)) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {bad} is {}x{}x{}, prediction 0 is {}x{}x{}",
            preds[bad].height(),
            preds[bad].width(),
            preds[bad].classes(),
            first.height(),
            first.width(),
            first.classes()
        )));
    }
    let mut acc = first.probs().to_vec();
    for p in &preds[1..] {
        for (a, &v) in acc.iter_mut().zip(p.probs()) {
            *a += v;
        }
    }
    let m = preds.len() as f64;
    for a in acc.iter_mut() {
        *a /= m;
    }
    PredictionMap::new(first.height(), first.width(), first.classes(), acc)
}

/// Index of the largest entry, ties going to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn argmax_labels(pred: &PredictionMap) -> LabelMap {
    let labels = pred.pixel_rows().map(|row| argmax(row) as u8).collect();
    LabelMap::new(pred.height(), pred.width(), labels).expect("shape comes from a valid map")
}

/// Per-class confidence lists gathered in pass one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidencePool {
    per_class: Vec<Vec<f64>>,
}

impl ConfidencePool {
    pub fn new(classes: usize) -> Self {
        Self { per_class: vec![Vec::new(); classes] }
    }

    pub fn classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn add(&mut self, pred: &PredictionMap) -> Result<()> {
        if pred.classes() != self.classes() {
            return Err(Error::DimensionMismatch(format!(
                "map has {} classes, pool has {}",
                pred.classes(),
                self.classes()
            )));
        }
        for row in pred.pixel_rows() {
            let k = argmax(row);
            self.per_class[k].push(row[k]);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: ConfidencePool) -> Result<()> {
        if other.classes() != self.classes() {
            return Err(Error::DimensionMismatch("pools have different class counts".into()));
        }
        for (mine, theirs) in self.per_class.iter_mut().zip(other.per_class) {
            mine.extend(theirs);
        }
        Ok(())
    }

    /// Quantile threshold per class; `None` for classes with no candidates.
    pub fn thresholds(&self, top_fraction: f64) -> Vec<Option<f64>> {
        self.per_class
            .iter()
            .map(|c| {
                let mut sorted = c.clone();
                top_fraction_threshold(&mut sorted, top_fraction)
            })
            .collect()
    }
}

/// Nearest-rank cut for "within the top `top_fraction`": with `n` values
/// sorted ascending and `keep = ceil(top_fraction · n)` (at least 1), the
/// threshold is the `keep`-th largest value. Sorts `values` in place.
pub fn top_fraction_threshold(values: &mut [f64], top_fraction: f64) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let keep = (libm::ceil(top_fraction * n as f64 - COUNT_SLACK) as usize).clamp(1, n);
    Some(values[n - keep])
}

/// Per-class tallies from pass two.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassTally {
    pub candidates: usize,
    pub kept: usize,
    pub kept_confidence_sum: f64,
}

/// Pass two for one map: keep a pixel iff its confidence reaches the floor
/// or its class threshold.
pub fn apply_thresholds(
    pred: &PredictionMap,
    thresholds: &[Option<f64>],
    confidence_floor: f64,
) -> (LabelMap, Vec<ClassTally>) {
    let mut tallies = vec![ClassTally::default(); pred.classes()];
    let labels = pred
        .pixel_rows()
        .map(|row| {
            let k = argmax(row);
            let conf = row[k];
            let tally = &mut tallies[k];
            tally.candidates += 1;
            let keep = conf >= confidence_floor || thresholds[k].is_some_and(|t| conf >= t);
            if keep {
                tally.kept += 1;
                tally.kept_confidence_sum += conf;
                k as u8
            } else {
                IGNORE_LABEL
            }
        })
        .collect();
    let labels = LabelMap::new(pred.height(), pred.width(), labels).expect("shape from a valid map");
    (labels, tallies)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub candidates: usize,
    pub kept: usize,
    /// `kept / candidates`, 0 for absent classes.
    pub kept_fraction: f64,
    /// Mean confidence of kept pixels, 0 when none kept.
    pub mean_confidence: f64,
    /// Batch-scope quantile threshold, `None` for per-image scope or absent classes.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelResult {
    /// One map per input, rejected pixels set to [`IGNORE_LABEL`].
    pub labels: Vec<LabelMap>,
    pub classes: Vec<ClassStats>,
}

/// Confidence-filtered argmax labels for a batch of (already averaged) maps.
pub fn pseudo_labels(preds: &[PredictionMap], cfg: &EnsembleConfig) -> Result<PseudoLabelResult> {
    cfg.validate()?;
    let first = preds.first().ok_or_else(|| Error::Empty("no predictions".into()))?;
    let classes = first.classes();
    if let Some(bad) = preds.iter().position(|p| p.classes() != classes) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {bad} has {} classes, expected {classes}",
            preds[bad].classes()
        )));
    }

    let batch_thresholds = match cfg.scope {
        ThresholdScope::PerClassOverBatch => {
            let mut pool = ConfidencePool::new(classes);
            for p in preds {
                pool.add(p)?;
            }
            Some(pool.thresholds(cfg.top_fraction))
        }
        ThresholdScope::PerImage => None,
    };

    let mut totals = vec![ClassTally::default(); classes];
    let mut labels = Vec::with_capacity(preds.len());
    for p in preds {
        let per_image;
        let thresholds = match &batch_thresholds {
            Some(t) => t,
            None => {
                let mut pool = ConfidencePool::new(classes);
                pool.add(p)?;
                per_image = pool.thresholds(cfg.top_fraction);
                &per_image
            }
        };
        let (map, tallies) = apply_thresholds(p, thresholds, cfg.confidence_floor);
        for (t, n) in totals.iter_mut().zip(tallies) {
            t.candidates += n.candidates;
            t.kept += n.kept;
            t.kept_confidence_sum += n.kept_confidence_sum;
        }
        labels.push(map);
    }

    let classes = totals
        .iter()
        .enumerate()
        .map(|(k, t)| ClassStats {
            candidates: t.candidates,
            kept: t.kept,
            kept_fraction: if t.candidates == 0 { 0.0 } else { t.kept as f64 / t.candidates as f64 },
            mean_confidence: if t.kept == 0 { 0.0 } else { t.kept_confidence_sum / t.kept as f64 },
            threshold: batch_thresholds.as_ref().and_then(|th| th[k]),
        })
        .collect();
    Ok(PseudoLabelResult { labels, classes })
}

/// `K x K` counts indexed `[ground truth][prediction]`, plus ground-truth
/// pixels whose prediction is not a valid class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
    unpredicted: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes], unpredicted: vec![0; classes] }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn valid_pixels(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.unpredicted.iter().sum::<u64>()
    }

    /// Adds one prediction/ground-truth pair. Ground-truth ignore pixels are
    /// skipped; other ground-truth labels must be below `classes`.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
            return Err(Error::DimensionMismatch(format!(
                "prediction is {}x{}, ground truth is {}x{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        gt.check_classes(self.classes)?;
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            if g == IGNORE_LABEL {
                continue;
            }
            let (g, p) = (usize::from(g), usize::from(p));
            if p < self.classes {
                self.counts[g * self.classes + p] += 1;
            } else {
                self.unpredicted[g] += 1;
            }
        }
        Ok(())
    }

    /// `TP / (TP + FP + FN)` per class, `None` when the class appears in
    /// neither predictions nor ground truth.
    pub fn iou(&self) -> Vec<Option<f64>> {
        let k = self.classes;
        (0..k)
            .map(|c| {
                let tp = self.count(c, c);
                let fp: u64 = (0..k).filter(|&g| g != c).map(|g| self.count(g, c)).sum();
                let fn_: u64 =
                    (0..k).filter(|&p| p != c).map(|p| self.count(c, p)).sum::<u64>() + self.unpredicted[c];
                let denom = tp + fp + fn_;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiouReport {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
    pub confusion: ConfusionMatrix,
}

pub fn compute_miou(preds: &[LabelMap], gts: &[LabelMap], classes: usize) -> Result<MiouReport> {
    if classes == 0 {
        return Err(Error::InvalidParameter("class count must be >= 1".into()));
    }
    if preds.len() != gts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} ground-truth maps",
            preds.len(),
            gts.len()
        )));
    }
    let mut confusion = ConfusionMatrix::new(classes);
    for (p, g) in preds.iter().zip(gts) {
        confusion.accumulate(p, g)?;
    }
    if confusion.valid_pixels() == 0 {
        return Err(Error::EmptyReduction);
    }
    let per_class = confusion.iou();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(MiouReport { per_class, mean, confusion })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, k: usize, probs: &[f64]) -> PredictionMap {
        PredictionMap::new(h, w, k, probs.to_vec()).unwrap()
    }

    #[test]
    fn mean_of_one_is_identity() {
        let a = map(1, 2, 3, &[0.2, 0.3, 0.5, 0.1, 0.1, 0.8]);
        assert_eq!(mean_prediction(core::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn mean_rejects_bad_batches() {
        assert!(mean_prediction(&[]).is_err());
        let a = map(1, 1, 2, &[0.5, 0.5]);
        let b = map(1, 1, 3, &[0.2, 0.3, 0.5]);
        assert!(matches!(mean_prediction(&[a, b]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        let m = map(1, 2, 2, &[0.5, 0.5, 0.0, 1.0]);
        assert_eq!(argmax_labels(&m).labels(), &[0, 1]);
    }

    #[test]
    fn floor_branch_keeps_confident_pixels() {
        let probs: Vec<f64> = (0..8).flat_map(|_| [0.95, 0.05]).collect();
        let r = pseudo_labels(&[map(2, 4, 2, &probs)], &EnsembleConfig::default()).unwrap();
        assert!(r.labels[0].labels().iter().all(|&l| l == 0));
        assert_eq!(r.classes[0].kept_fraction, 1.0);
        assert_eq!(r.classes[1].kept_fraction, 0.0);
        assert_eq!(r.classes[1].threshold, None);
    }

    #[test]
    fn quantile_branch_keeps_top_fraction() {
        // 100 pixels, class-0 confidences spread over [0.1, 0.8]
        let mut probs = Vec::new();
        for i in 0..100 {
            let c = 0.1 + 0.7 * i as f64 / 99.0;
            let rest = (1.0 - c) / 9.0;
            probs.push(c);
            probs.extend(core::iter::repeat_n(rest, 9));
        }
        let r = pseudo_labels(&[map(10, 10, 10, &probs)], &EnsembleConfig::default()).unwrap();
        let kept = r.labels[0].labels().iter().filter(|&&l| l != IGNORE_LABEL).count();
        assert_eq!(kept, 66);
        // the kept ones are the most confident
        assert!(r.labels[0].labels()[..34].iter().all(|&l| l == IGNORE_LABEL));
        assert!(r.labels[0].labels()[34..].iter().all(|&l| l == 0));
    }

    #[test]
    fn threshold_counts() {
        let mut v = [0.3, 0.1, 0.2];
        assert_eq!(top_fraction_threshold(&mut v, 1.0), Some(0.1));
        assert_eq!(top_fraction_threshold(&mut v, 0.01), Some(0.3));
        assert_eq!(top_fraction_threshold(&mut v, 0.5), Some(0.2));
        assert_eq!(top_fraction_threshold(&mut [], 0.5), None);
    }

    #[test]
    fn per_image_scope_differs_from_batch() {
        // image 0 confidences 0.6, 0.7; image 1 confidences 0.5, 0.55
        let a = map(1, 2, 2, &[0.6, 0.4, 0.7, 0.3]);
        let b = map(1, 2, 2, &[0.5, 0.5, 0.55, 0.45]);
        let cfg = EnsembleConfig { top_fraction: 0.5, ..Default::default() };
        let batch = pseudo_labels(&[a.clone(), b.clone()], &cfg).unwrap();
        let per_image =
            pseudo_labels(&[a, b], &EnsembleConfig { scope: ThresholdScope::PerImage, ..cfg }).unwrap();
        assert_eq!(batch.labels[1].labels(), &[IGNORE_LABEL, IGNORE_LABEL]);
        assert_eq!(per_image.labels[1].labels(), &[IGNORE_LABEL, 0]);
    }

    #[test]
    fn pools_merge_order_independent() {
        let a = map(1, 2, 2, &[0.6, 0.4, 0.2, 0.8]);
        let b = map(1, 2, 2, &[0.9, 0.1, 0.7, 0.3]);
        let mut p1 = ConfidencePool::new(2);
        p1.add(&a).unwrap();
        let mut p2 = ConfidencePool::new(2);
        p2.add(&b).unwrap();
        let mut ab = p1.clone();
        ab.merge(p2.clone()).unwrap();
        let mut ba = p2;
        ba.merge(p1).unwrap();
        assert_eq!(ab.thresholds(0.5), ba.thresholds(0.5));
    }

    #[test]
    fn config_validation() {
        assert!(EnsembleConfig { top_fraction: 0.0, ..Default::default() }.validate().is_err());
        assert!(EnsembleConfig { confidence_floor: 1.1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn miou_hand_fixture() {
        // gt:   0 0 1 1 / 2 2 255 1
        // pred: 0 1 1 1 / 2 0 2   255
        let gt = LabelMap::new(2, 4, vec![0, 0, 1, 1, 2, 2, 255, 1]).unwrap();
        let pred = LabelMap::new(2, 4, vec![0, 1, 1, 1, 2, 0, 2, 255]).unwrap();
        let r = compute_miou(&[pred], &[gt], 3).unwrap();
        // class 0: tp 1, fp 1 (gt 2 -> 0), fn 1 (gt 0 -> 1) => 1/3
        // class 1: tp 2, fp 1, fn 1 (unpredicted) => 2/4
        // class 2: tp 1, fp 0, fn 1 => 1/2
        assert_eq!(r.per_class, vec![Some(1.0 / 3.0), Some(0.5), Some(0.5)]);
        assert!((r.mean - (1.0 / 3.0 + 0.5 + 0.5) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn miou_edge_cases() {
        let gt = LabelMap::new(1, 3, vec![0, 0, 1]).unwrap();
        let r = compute_miou(core::slice::from_ref(&gt), core::slice::from_ref(&gt), 4).unwrap();
        assert_eq!(r.per_class, vec![Some(1.0), Some(1.0), None, None]);
        assert_eq!(r.mean, 1.0);
        let disjoint = LabelMap::new(1, 3, vec![0, 0, 0]).unwrap();
        assert_eq!(compute_miou(&[disjoint], core::slice::from_ref(&gt), 2).unwrap().per_class[1], Some(0.0));
        let ignored = LabelMap::new(1, 3, vec![IGNORE_LABEL; 3]).unwrap();
        assert_eq!(compute_miou(core::slice::from_ref(&gt), &[ignored], 2), Err(Error::EmptyReduction));
        assert!(compute_miou(core::slice::from_ref(&gt), &[], 2).is_err());
        assert!(compute_miou(core::slice::from_ref(&gt), core::slice::from_ref(&gt), 1).is_err());
    }
}
