//! 2D discrete Fourier analysis and synthesis of image channels.
//!
//! Spectra are stored DC-centered: the zero-frequency bin sits at
//! `(H/2, W/2)` (integer division), and the centered index `i` holds the
//! natural frequency index `(i + H - H/2) mod H`. The forward transform is
//! unnormalized; the inverse carries `1/(H·W)`.
//!
//! Channels are transformed independently. Two real channels are packed
//! into one complex transform and separated using conjugate symmetry, which
//! also makes every returned spectrum exactly Hermitian.

use alloc::{format, vec, vec::Vec};
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::fft::Fft2d;
use crate::raster::RasterImage;
use crate::{Error, Result};

/// Complex spectrum of one channel, DC-centered, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpectrum {
    height: usize,
    width: usize,
    coeffs: Vec<Complex64>,
}

impl ChannelSpectrum {
    pub fn new(height: usize, width: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions(format!("{height}x{width} has zero area")));
        }
        if coeffs.len() != height * width {
            return Err(Error::InvalidDimensions(format!(
                "{height}x{width} spectrum needs {} coefficients, got {}",
                height * width,
                coeffs.len()
            )));
        }
        if let Some(index) = coeffs.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { height, width, coeffs })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![Complex64::new(0.0, 0.0); height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient at centered bin `(row, col)`.
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.coeffs[row * self.width + col]
    }

    /// Centered index of the DC bin.
    pub fn dc_index(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }

    /// Centered index of the bin at the negated frequency of `(row, col)`.
    pub fn mirror_index(&self, row: usize, col: usize) -> (usize, usize) {
        (mirror(row, self.height), mirror(col, self.width))
    }
}

/// `2c - i mod n` with `c = n/2`.
#[inline]
fn mirror(i: usize, n: usize) -> usize {
    (2 * (n / 2) + n - i) % n
}

/// Amplitude and phase of every bin of every channel, planar per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudePhase {
    height: usize,
    width: usize,
    channels: usize,
    amplitude: Vec<f64>,
    phase: Vec<f64>,
}

impl AmplitudePhase {
    /// Both arrays are `C` planes of `H x W`, concatenated.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        amplitude: Vec<f64>,
        phase: Vec<f64>,
    ) -> Result<Self> {
        let len = height * width * channels;
        if len == 0 || amplitude.len() != len || phase.len() != len {
            return Err(Error::InvalidDimensions(format!(
                "{height}x{width}x{channels} needs {len} amplitudes and phases, got {} and {}",
                amplitude.len(),
                phase.len()
            )));
        }
        for (index, &a) in amplitude.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if a < 0.0 {
                return Err(Error::OutOfRange { index, value: a, min: 0.0, max: f64::INFINITY });
            }
        }
        if let Some(index) = phase.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { height, width, channels, amplitude, phase })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn channel_amplitude(&self, channel: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.amplitude[channel * n..(channel + 1) * n]
    }

    pub fn channel_phase(&self, channel: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.phase[channel * n..(channel + 1) * n]
    }
}

/// Output of [`inverse_fft`]: the real part plus how far from real it was.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Real part, not clamped or quantized.
    pub image: RasterImage,
    /// Largest `|Im|` over all samples of the inverse transform.
    pub max_imag_residual: f64,
}

#[inline]
fn centered_to_natural(i: usize, n: usize) -> usize {
    (i + n - n / 2) % n
}

/// Forward 2D DFT of every channel, DC-centered.
pub fn forward_fft(image: &RasterImage) -> Vec<ChannelSpectrum> {
    let (h, w, c) = image.dims();
    let plan = Fft2d::new(h, w);
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.scratch_len()];
    let samples = image.samples();
    let mut out = Vec::with_capacity(c);
    let mut first = 0;
    while first < c {
        let paired = first + 1 < c;
        let packed: Vec<Complex64> = samples
            .chunks_exact(c)
            .map(|px| Complex64::new(px[first], if paired { px[first + 1] } else { 0.0 }))
            .collect();
        let (sa, sb) = unpack_real_pair(&plan, packed, &mut scratch, paired);
        out.push(sa);
        out.extend(sb);
        first += 2;
    }
    out
}

/// Transforms `a + i·b` once and splits it into the two real-input spectra,
/// moving them to the centered layout.
fn unpack_real_pair(
    plan: &Fft2d,
    mut packed: Vec<Complex64>,
    scratch: &mut [Complex64],
    paired: bool,
) -> (ChannelSpectrum, Option<ChannelSpectrum>) {
    let (h, w) = (plan.height(), plan.width());
    plan.forward_with_scratch(&mut packed, scratch);

    let mut sa = Vec::with_capacity(h * w);
    let mut sb = Vec::with_capacity(if paired { h * w } else { 0 });
    let cols: Vec<(usize, usize)> = (0..w)
        .map(|c| {
            let n = centered_to_natural(c, w);
            (n, (w - n) % w)
        })
        .collect();
    for r in 0..h {
        let m = centered_to_natural(r, h);
        let row = &packed[m * w..(m + 1) * w];
        let neg_row = &packed[((h - m) % h) * w..][..w];
        for &(n, neg_n) in &cols {
            let z = row[n];
            let zc = neg_row[neg_n].conj();
            sa.push((z + zc) * 0.5);
            if paired {
                // (z - conj z[-k]) / 2i
                let d = (z - zc) * 0.5;
                sb.push(Complex64::new(d.im, -d.re));
            }
        }
    }
    let spectrum = |coeffs| ChannelSpectrum { height: h, width: w, coeffs };
    (spectrum(sa), paired.then(|| spectrum(sb)))
}

/// Inverse 2D DFT of centered spectra; returns the real part.
///
/// Each spectrum is split into its Hermitian part, whose inverse is real,
/// and its anti-Hermitian part, whose inverse is purely imaginary and is
/// what the residual measures. The second transform is skipped when the
/// anti-Hermitian parts are exactly zero.
pub fn inverse_fft(spectra: &[ChannelSpectrum]) -> Result<Reconstruction> {
    let first = spectra.first().ok_or_else(|| Error::Empty("no spectra to invert".into()))?;
    let (h, w) = (first.height, first.width);
    if let Some(bad) = spectra.iter().position(|s| (s.height, s.width) != (h, w)) {
        return Err(Error::DimensionMismatch(format!(
            "spectrum {bad} is {}x{}, spectrum 0 is {h}x{w}",
            spectra[bad].height, spectra[bad].width
        )));
    }
    let c = spectra.len();
    if c != 1 && c != 3 {
        return Err(Error::InvalidDimensions(format!("{c} spectra, expected 1 or 3 channels")));
    }
    let plan = Fft2d::new(h, w);
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.scratch_len()];
    let mut hermitian = vec![Complex64::new(0.0, 0.0); h * w];
    let mut anti = Vec::new();
    let mut samples = vec![0.0; h * w * c];
    let mut residual: f64 = 0.0;
    for (pair_index, pair) in spectra.chunks(2).enumerate() {
        let has_anti = split_symmetric_parts(pair, &mut hermitian, &mut anti);
        plan.inverse_with_scratch(&mut hermitian, &mut scratch);
        let ch = 2 * pair_index;
        for (px, z) in samples.chunks_exact_mut(c).zip(&hermitian) {
            px[ch] = z.re;
            if pair.len() == 2 {
                px[ch + 1] = z.im;
            }
        }
        if has_anti {
            // inverse = i·r_a - r_b
            plan.inverse_with_scratch(&mut anti, &mut scratch);
            for z in &anti {
                residual = residual.max(z.re.abs()).max(z.im.abs());
            }
        }
    }
    let image = RasterImage::new(h, w, c, samples)?;
    Ok(Reconstruction { image, max_imag_residual: residual })
}

/// Writes the Hermitian parts of one or two spectra as `Ha + i·Hb` in
/// natural order into `hermitian`, and the anti-Hermitian parts as
/// `Aa + i·Ab` into `anti` when any is non-zero (the return value).
fn split_symmetric_parts(
    pair: &[ChannelSpectrum],
    hermitian: &mut [Complex64],
    anti: &mut Vec<Complex64>,
) -> bool {
    let (h, w) = (pair[0].height, pair[0].width);
    anti.clear();
    let mut any_anti = false;
    let cols: Vec<(usize, usize)> = (0..w).map(|c| (centered_to_natural(c, w), mirror(c, w))).collect();
    let zero = Complex64::new(0.0, 0.0);
    // a + i·b
    let join = |a: Complex64, b: Complex64| Complex64::new(a.re - b.im, a.im + b.re);
    for r in 0..h {
        let nat_row = centered_to_natural(r, h) * w;
        let (ra, ma) = row_and_mirror(&pair[0], r);
        let second = pair.get(1).map(|spec| row_and_mirror(spec, r));
        for (c, &(nat_col, mirror_col)) in cols.iter().enumerate() {
            let z = ra[c];
            let zm = ma[mirror_col].conj();
            let (mut herm, mut skew) = ((z + zm) * 0.5, (z - zm) * 0.5);
            if let Some((rb, mb)) = second {
                let z = rb[c];
                let zm = mb[mirror_col].conj();
                herm = join(herm, (z + zm) * 0.5);
                skew = join(skew, (z - zm) * 0.5);
            }
            let idx = nat_row + nat_col;
            hermitian[idx] = herm;
            if skew != zero {
                if !any_anti {
                    any_anti = true;
                    anti.resize(h * w, zero);
                }
                anti[idx] = skew;
            }
        }
    }
    any_anti
}

fn row_and_mirror(spec: &ChannelSpectrum, r: usize) -> (&[Complex64], &[Complex64]) {
    let (h, w) = (spec.height, spec.width);
    (&spec.coeffs[r * w..(r + 1) * w], &spec.coeffs[mirror(r, h) * w..][..w])
}

/// Modulus and argument of every coefficient; `arg(0) = 0`, phase in `(-π, π]`.
pub fn split_amplitude_phase(spectra: &[ChannelSpectrum]) -> Result<AmplitudePhase> {
    let first = spectra.first().ok_or_else(|| Error::Empty("no spectra to split".into()))?;
    let (h, w) = (first.height, first.width);
    if let Some(bad) = spectra.iter().position(|s| (s.height, s.width) != (h, w)) {
        return Err(Error::DimensionMismatch(format!("spectrum {bad} differs from spectrum 0")));
    }
    let mut amplitude = Vec::with_capacity(h * w * spectra.len());
    let mut phase = Vec::with_capacity(h * w * spectra.len());
    for spec in spectra {
        for z in &spec.coeffs {
            let a = z.norm();
            amplitude.push(a);
            phase.push(if a == 0.0 { 0.0 } else { principal_arg(*z) });
        }
    }
    AmplitudePhase::new(h, w, spectra.len(), amplitude, phase)
}

fn principal_arg(z: Complex64) -> f64 {
    let p = libm::atan2(z.im, z.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// `amplitude · (cos φ + i·sin φ)` per bin.
pub fn recombine(ap: &AmplitudePhase) -> Result<Vec<ChannelSpectrum>> {
    if let Some(index) = ap.amplitude.iter().position(|&a| a < 0.0) {
        return Err(Error::OutOfRange { index, value: ap.amplitude[index], min: 0.0, max: f64::INFINITY });
    }
    (0..ap.channels)
        .map(|c| {
            let coeffs = ap
                .channel_amplitude(c)
                .iter()
                .zip(ap.channel_phase(c))
                .map(|(&a, &p)| Complex64::new(a * libm::cos(p), a * libm::sin(p)))
                .collect();
            ChannelSpectrum::new(ap.height, ap.width, coeffs)
        })
        .collect()
}
