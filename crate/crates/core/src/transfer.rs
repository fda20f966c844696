//! Low-frequency amplitude swap.
//!
//! The adapted image keeps the phase of the source everywhere, takes the
//! target amplitude inside a centered rectangle of the spectrum and keeps
//! the source amplitude outside it. The rectangle spans `floor(β·H)` bins on
//! each side of the DC row and `floor(β·W)` on each side of the DC column,
//! boundary included, saturating to the full axis.

use alloc::{format, vec::Vec};
use core::ops::Range;

use num_complex::Complex64;

use crate::raster::RasterImage;
use crate::spectral::{forward_fft, inverse_fft, ChannelSpectrum};
use crate::{Error, Result};

/// What `β = 0` means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroBeta {
    /// The inclusive rule still keeps the DC bin, so only mean brightness moves.
    #[default]
    DcOnly,
    /// Empty mask: the output reproduces the source.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferOptions {
    pub zero_beta: ZeroBeta,
    /// Clamp the reconstruction into `[0, 255]`.
    pub clamp: bool,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self { zero_beta: ZeroBeta::DcOnly, clamp: true }
    }
}

/// Rectangular low-frequency mask over a DC-centered `H x W` spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaMask {
    height: usize,
    width: usize,
    beta: f64,
    half_height: usize,
    half_width: usize,
    rows: Range<usize>,
    cols: Range<usize>,
}

/// Builds the mask with the default `β = 0` convention (DC bin only).
pub fn build_mask(height: usize, width: usize, beta: f64) -> Result<BetaMask> {
    BetaMask::new(height, width, beta, ZeroBeta::DcOnly)
}

impl BetaMask {
    pub fn new(height: usize, width: usize, beta: f64, zero_beta: ZeroBeta) -> Result<Self> {
        check_beta(beta)?;
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions(format!("{height}x{width} has zero area")));
        }
        let half_height = libm::floor(beta * height as f64) as usize;
        let half_width = libm::floor(beta * width as f64) as usize;
        let (rows, cols) = if beta == 0.0 && zero_beta == ZeroBeta::Identity {
            (0..0, 0..0)
        } else {
            (centered_span(height, half_height), centered_span(width, half_width))
        };
        Ok(Self { height, width, beta, half_height, half_width, rows, cols })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `floor(β·H)`
    pub fn half_height(&self) -> usize {
        self.half_height
    }

    /// `floor(β·W)`
    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Set rows, as a range of centered row indices.
    pub fn rows(&self) -> Range<usize> {
        self.rows.clone()
    }

    pub fn cols(&self) -> Range<usize> {
        self.cols.clone()
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.rows.contains(&row) && self.cols.contains(&col)
    }

    pub fn popcount(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    /// Row-major bit plane.
    pub fn bits(&self) -> Vec<bool> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .map(|(r, c)| self.contains(r, c))
            .collect()
    }

    /// True when every set bin of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BetaMask) -> bool {
        if (self.height, self.width) != (other.height, other.width) {
            return false;
        }
        self.popcount() == 0
            || (other.rows.start <= self.rows.start
                && self.rows.end <= other.rows.end
                && other.cols.start <= self.cols.start
                && self.cols.end <= other.cols.end)
    }
}

fn centered_span(n: usize, half: usize) -> Range<usize> {
    let center = n / 2;
    center.saturating_sub(half)..(center + half + 1).min(n)
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidBeta(beta))
    }
}

/// One adapted image.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub adapted: RasterImage,
    pub beta: f64,
    pub max_imag_residual: f64,
    /// Samples outside `[0, 255]` before clamping (clamped only if enabled).
    pub clamp_count: usize,
    /// `Σ (|T| - |S|)²` over the masked bins of all channels.
    pub swapped_energy: f64,
}

/// Adapts `source` to the low-frequency amplitude of `target`.
pub fn spectral_transfer(
    source: &RasterImage,
    target: &RasterImage,
    beta: f64,
    options: &TransferOptions,
) -> Result<TransferResult> {
    let mut results = multi_beta_transfer(source, target, &[beta], options)?;
    Ok(results.remove(0))
}

/// Runs the swap for each β, reusing one forward transform per input.
///
/// Results come back in the order of `betas`.
pub fn multi_beta_transfer(
    source: &RasterImage,
    target: &RasterImage,
    betas: &[f64],
    options: &TransferOptions,
) -> Result<Vec<TransferResult>> {
    if betas.is_empty() {
        return Err(Error::Empty("no beta values".into()));
    }
    for &beta in betas {
        check_beta(beta)?;
    }
    if source.dims() != target.dims() {
        let (sh, sw, sc) = source.dims();
        let (th, tw, tc) = target.dims();
        return Err(Error::DimensionMismatch(format!(
            "source is {sh}x{sw}x{sc}, target is {th}x{tw}x{tc}; resize the target to the source dims first"
        )));
    }
    source.check_intensity_range()?;
    target.check_intensity_range()?;

    let source_spectra = forward_fft(source);
    let target_spectra = forward_fft(target);
    let (height, width, _) = source.dims();
    let mut results = Vec::with_capacity(betas.len());
    let mut spare = Some(source_spectra);
    for (i, &beta) in betas.iter().enumerate() {
        let mask = BetaMask::new(height, width, beta, options.zero_beta)?;
        // the last β may consume the source spectra
        let mut mixed = if i + 1 == betas.len() {
            spare.take().expect("source spectra")
        } else {
            spare.clone().expect("source spectra")
        };
        let swapped_energy = swap_in_place(&mut mixed, &target_spectra, &mask);
        let rec = inverse_fft(&mixed)?;
        let mut adapted = rec.image;
        let clamp_count = if options.clamp {
            adapted.clamp_intensities()
        } else {
            adapted.samples().iter().filter(|v| !(0.0..=255.0).contains(*v)).count()
        };
        results.push(TransferResult {
            adapted,
            beta,
            max_imag_residual: rec.max_imag_residual,
            clamp_count,
            swapped_energy,
        });
    }
    Ok(results)
}

/// Replaces the amplitude of `source` by the one of `target` on masked bins.
///
/// The source phase factor `S/|S|` is applied directly, with `arg(0) = 0`.
/// Unmasked bins are copied unchanged.
pub fn swap_amplitudes(
    source: &[ChannelSpectrum],
    target: &[ChannelSpectrum],
    mask: &BetaMask,
) -> (Vec<ChannelSpectrum>, f64) {
    let mut mixed = source.to_vec();
    let energy = swap_in_place(&mut mixed, target, mask);
    (mixed, energy)
}

fn swap_in_place(spectra: &mut [ChannelSpectrum], target: &[ChannelSpectrum], mask: &BetaMask) -> f64 {
    let mut energy = 0.0;
    for (s, t) in spectra.iter_mut().zip(target) {
        let width = s.width();
        let coeffs = s.coefficients_mut();
        for r in mask.rows() {
            for c in mask.cols() {
                let idx = r * width + c;
                let src = coeffs[idx];
                let src_amp = src.norm();
                let tgt_amp = t.coefficients()[idx].norm();
                energy += (tgt_amp - src_amp) * (tgt_amp - src_amp);
                coeffs[idx] = if src_amp > 0.0 {
                    src * (tgt_amp / src_amp)
                } else {
                    Complex64::new(tgt_amp, 0.0)
                };
            }
        }
    }
    energy
}
