// Brute-force reference implementations shared by the integration tests.
// Everything here is written for clarity, not speed, and only depends on the
// public types of fda_core.
#![allow(dead_code)]

use std::f64::consts::PI;

use fda_core::{LabelMap, PredictionMap, RasterImage, IGNORE_LABEL};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl Rng, h: usize, w: usize, c: usize) -> RasterImage {
    let samples = (0..h * w * c).map(|_| rng.random_range(0..=255u32) as f64).collect();
    RasterImage::new(h, w, c, samples).unwrap()
}

pub fn random_prediction(rng: &mut impl Rng, h: usize, w: usize, k: usize) -> PredictionMap {
    let scores = (0..h * w * k).map(|_| rng.random_range(0.01..1.0f64)).collect();
    PredictionMap::from_scores(h, w, k, scores).unwrap()
}

/// Prediction with a mix of peaked and flat pixels so both filter branches fire.
pub fn random_peaked_prediction(rng: &mut impl Rng, h: usize, w: usize, k: usize) -> PredictionMap {
    let mut scores = vec![0.0; h * w * k];
    for px in scores.chunks_exact_mut(k) {
        let sharp = rng.random_range(0.0..12.0f64);
        for s in px.iter_mut() {
            *s = (sharp * rng.random::<f64>()).exp();
        }
    }
    PredictionMap::from_scores(h, w, k, scores).unwrap()
}

pub fn random_labels(rng: &mut impl Rng, h: usize, w: usize, k: usize, ignore_rate: f64) -> LabelMap {
    let labels = (0..h * w)
        .map(|_| if rng.random_bool(ignore_rate) { IGNORE_LABEL } else { rng.random_range(0..k) as u8 })
        .collect();
    LabelMap::new(h, w, labels).unwrap()
}

fn twiddle(num: usize, den: usize, sign: f64) -> Complex64 {
    let angle = sign * 2.0 * PI * (num % den) as f64 / den as f64;
    Complex64::new(angle.cos(), angle.sin())
}

/// Natural-order index `k` of centered position `i` on an axis of length `n`.
pub fn natural(i: usize, n: usize) -> usize {
    (i + n - n / 2) % n
}

/// Direct double-sum DFT of a real `h x w` plane, returned DC-centered.
pub fn dft2_centered(plane: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for cm in 0..h {
        for cn in 0..w {
            let (m, n) = (natural(cm, h), natural(cn, w));
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..h {
                let row = twiddle(m * y, h, -1.0);
                for x in 0..w {
                    acc += plane[y * w + x] * row * twiddle(n * x, w, -1.0);
                }
            }
            out[cm * w + cn] = acc;
        }
    }
    out
}

/// Direct double-sum inverse of a DC-centered spectrum, `1/(HW)` scaled.
pub fn idft2_centered(spec: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for cm in 0..h {
                for cn in 0..w {
                    let (m, n) = (natural(cm, h), natural(cn, w));
                    acc += spec[cm * w + cn] * twiddle(m * y, h, 1.0) * twiddle(n * x, w, 1.0);
                }
            }
            out[y * w + x] = acc / (h * w) as f64;
        }
    }
    out
}

/// The mask predicate, evaluated bin by bin.
pub fn mask_bit(h: usize, w: usize, beta: f64, m: usize, n: usize) -> bool {
    let half_h = (beta * h as f64).floor() as i64;
    let half_w = (beta * w as f64).floor() as i64;
    (m as i64 - (h / 2) as i64).abs() <= half_h && (n as i64 - (w / 2) as i64).abs() <= half_w
}

pub struct OracleTransfer {
    /// Unclamped real output, channel-last.
    pub samples: Vec<f64>,
    pub max_imag: f64,
    pub swapped_energy: f64,
}

/// Full amplitude swap with double-sum transforms.
pub fn fda_oracle(src: &RasterImage, tgt: &RasterImage, beta: f64) -> OracleTransfer {
    let (h, w, c) = src.dims();
    let mut samples = vec![0.0; h * w * c];
    let mut max_imag: f64 = 0.0;
    let mut energy = 0.0;
    for ch in 0..c {
        let s = dft2_centered(&src.channel_plane(ch), h, w);
        let t = dft2_centered(&tgt.channel_plane(ch), h, w);
        let mut mixed = s.clone();
        for m in 0..h {
            for n in 0..w {
                if mask_bit(h, w, beta, m, n) {
                    let i = m * w + n;
                    let (sa, ta) = (s[i].norm(), t[i].norm());
                    energy += (ta - sa) * (ta - sa);
                    mixed[i] = Complex64::from_polar(ta, s[i].arg());
                }
            }
        }
        let back = idft2_centered(&mixed, h, w);
        for (p, v) in back.iter().enumerate() {
            samples[p * c + ch] = v.re;
            max_imag = max_imag.max(v.im.abs());
        }
    }
    OracleTransfer { samples, max_imag, swapped_energy: energy }
}

pub fn oracle_entropy(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    h
}

pub fn oracle_robust_entropy(pred: &PredictionMap, eta: f64) -> f64 {
    let k = pred.classes();
    let mut total = 0.0;
    for px in 0..pred.pixels() {
        let h = oracle_entropy(&pred.probs()[px * k..(px + 1) * k]);
        total += (h * h + 0.001 * 0.001).powf(eta);
    }
    total / pred.pixels() as f64
}

pub fn oracle_cross_entropy(pred: &PredictionMap, labels: &LabelMap) -> Option<f64> {
    let k = pred.classes();
    let (mut sum, mut n) = (0.0, 0usize);
    for (px, &l) in labels.labels().iter().enumerate() {
        if l != IGNORE_LABEL {
            sum += -pred.probs()[px * k + l as usize].max(1e-12).ln();
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn oracle_argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..p.len() {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

/// Sort-based pseudo-label filter, thresholds pooled per class over `preds`.
pub fn oracle_pseudo_labels(preds: &[PredictionMap], top_fraction: f64, floor: f64) -> Vec<Vec<u8>> {
    let k = preds[0].classes();
    let mut conf: Vec<Vec<f64>> = vec![Vec::new(); k];
    for p in preds {
        for px in 0..p.pixels() {
            let row = &p.probs()[px * k..(px + 1) * k];
            let a = oracle_argmax(row);
            conf[a].push(row[a]);
        }
    }
    let thresholds: Vec<Option<f64>> = conf
        .iter_mut()
        .map(|c| {
            if c.is_empty() {
                return None;
            }
            c.sort_by(|a, b| b.partial_cmp(a).unwrap());
            // smallest count covering the fraction, nearest rank from the top
            let mut keep = 1;
            while (keep as f64) < top_fraction * c.len() as f64 - 1e-9 {
                keep += 1;
            }
            Some(c[keep.min(c.len()) - 1])
        })
        .collect();
    preds
        .iter()
        .map(|p| {
            (0..p.pixels())
                .map(|px| {
                    let row = &p.probs()[px * k..(px + 1) * k];
                    let a = oracle_argmax(row);
                    let pass_quantile = thresholds[a].is_some_and(|t| row[a] >= t);
                    if row[a] >= floor || pass_quantile {
                        a as u8
                    } else {
                        IGNORE_LABEL
                    }
                })
                .collect()
        })
        .collect()
}

/// Per-class IoU from explicit TP/FP/FN counts.
pub fn oracle_iou(preds: &[LabelMap], gts: &[LabelMap], k: usize) -> Vec<Option<f64>> {
    (0..k)
        .map(|class| {
            let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
            for (p, g) in preds.iter().zip(gts) {
                for (&pl, &gl) in p.labels().iter().zip(g.labels()) {
                    if gl == IGNORE_LABEL {
                        continue;
                    }
                    let (is_p, is_g) = (pl as usize == class, gl as usize == class);
                    match (is_p, is_g) {
                        (true, true) => tp += 1,
                        (true, false) => fp += 1,
                        (false, true) => fnn += 1,
                        _ => {}
                    }
                }
            }
            let denom = tp + fp + fnn;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Max coefficient error divided by the largest oracle magnitude.
pub fn spectrum_rel_error(fast: &[Complex64], oracle: &[Complex64]) -> f64 {
    let scale = oracle.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
    let err = fast.iter().zip(oracle).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    err / scale
}

/// Shortest signed distance between two angles.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI { d - 2.0 * PI } else { d }
}
