//! Complex FFT for arbitrary lengths.
//!
//! A length is split into radix 4, 2, 3, 5, ... stages that run through a
//! self-sorting Stockham loop (ping-pong between the data and a scratch
//! buffer, no bit reversal). Lengths with a prime factor above
//! [`MAX_STAGE_RADIX`] use Bluestein's chirp-z algorithm on top of a
//! power-of-two plan.
//!
//! Forward transforms use `exp(-2πi·jk/n)` and are unnormalized. The inverse
//! entry points are unnormalized as well; [`Fft2d::inverse`] applies the
//! `1/(H·W)` factor.
//!
//! Plans hold only precomputed twiddles and are immutable once built, so a
//! plan can be shared across threads freely.

use alloc::{boxed::Box, vec, vec::Vec};
use core::f64::consts::PI;

use num_complex::Complex64;

/// Largest prime handled by a direct butterfly stage.
pub const MAX_STAGE_RADIX: usize = 31;

/// `exp(-2πi·k/n)`
fn root_of_unity(k: usize, n: usize) -> Complex64 {
    let k = k % n;
    let angle = -2.0 * PI * (k as f64) / (n as f64);
    Complex64::new(libm::cos(angle), libm::sin(angle))
}

#[inline(always)]
fn mul_neg_i(z: Complex64) -> Complex64 {
    Complex64::new(z.im, -z.re)
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut radices = Vec::new();
    while n.is_multiple_of(4) {
        radices.push(4);
        n /= 4;
    }
    if n.is_multiple_of(2) {
        radices.push(2);
        n /= 2;
    }
    let mut f = 3;
    while f * f <= n {
        while n.is_multiple_of(f) {
            radices.push(f);
            n /= f;
        }
        f += 2;
    }
    if n > 1 {
        radices.push(n);
    }
    radices
}

struct Stage {
    radix: usize,
    span: usize,
    stride: usize,
    /// `twiddles[j * (radix - 1) + k - 1] = w_{radix*span}^{j*k}`
    twiddles: Vec<Complex64>,
    /// `w_radix^k`, only used by the generic butterfly.
    roots: Vec<Complex64>,
}

impl Stage {
    fn new(radix: usize, span: usize, stride: usize) -> Self {
        let n = radix * span;
        let mut twiddles = Vec::with_capacity(span * (radix - 1));
        for j in 0..span {
            for k in 1..radix {
                twiddles.push(root_of_unity(j * k, n));
            }
        }
        let roots = match radix {
            2..=4 => Vec::new(),
            _ => (0..radix).map(|k| root_of_unity(k, radix)).collect(),
        };
        Self { radix, span, stride, twiddles, roots }
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        match self.radix {
            2 => self.radix2(x, y),
            3 => self.radix3(x, y),
            4 => self.radix4(x, y),
            _ => self.generic(x, y),
        }
    }

    fn radix2(&self, x: &[Complex64], y: &mut [Complex64]) {
        let (m, s) = (self.span, self.stride);
        if s == 1 {
            let (x0, x1) = x[..2 * m].split_at(m);
            for (((out, &a), &b), &w) in
                y[..2 * m].chunks_exact_mut(2).zip(x0).zip(x1).zip(&self.twiddles)
            {
                out[0] = a + b;
                out[1] = (a - b) * w;
            }
            return;
        }
        for j in 0..m {
            let w = self.twiddles[j];
            let x0 = &x[s * j..s * j + s];
            let x1 = &x[s * (j + m)..s * (j + m) + s];
            let (y0, y1) = y[2 * s * j..2 * s * (j + 1)].split_at_mut(s);
            for q in 0..s {
                let a = x0[q];
                let b = x1[q];
                y0[q] = a + b;
                y1[q] = (a - b) * w;
            }
        }
    }

    fn radix3(&self, x: &[Complex64], y: &mut [Complex64]) {
        let (m, s) = (self.span, self.stride);
        // w_3 = -1/2 - i*sqrt(3)/2
        let half_sqrt3 = 0.866_025_403_784_438_6;
        for j in 0..m {
            let w1 = self.twiddles[2 * j];
            let w2 = self.twiddles[2 * j + 1];
            let x0 = &x[s * j..s * j + s];
            let x1 = &x[s * (j + m)..s * (j + m) + s];
            let x2 = &x[s * (j + 2 * m)..s * (j + 2 * m) + s];
            let (y0, rest) = y[3 * s * j..3 * s * (j + 1)].split_at_mut(s);
            let (y1, y2) = rest.split_at_mut(s);
            for q in 0..s {
                let a0 = x0[q];
                let t = x1[q] + x2[q];
                let d = x1[q] - x2[q];
                let base = a0 - t * 0.5;
                let rot = Complex64::new(d.im * half_sqrt3, -d.re * half_sqrt3);
                y0[q] = a0 + t;
                y1[q] = (base + rot) * w1;
                y2[q] = (base - rot) * w2;
            }
        }
    }

    fn radix4(&self, x: &[Complex64], y: &mut [Complex64]) {
        let (m, s) = (self.span, self.stride);
        if s == 1 {
            let (x0, rest) = x[..4 * m].split_at(m);
            let (x1, rest) = rest.split_at(m);
            let (x2, x3) = rest.split_at(m);
            let inputs = x0.iter().zip(x1).zip(x2).zip(x3);
            for ((out, tw), (((&a0, &a1), &a2), &a3)) in
                y[..4 * m].chunks_exact_mut(4).zip(self.twiddles.chunks_exact(3)).zip(inputs)
            {
                let t0 = a0 + a2;
                let t1 = a0 - a2;
                let t2 = a1 + a3;
                let t3 = mul_neg_i(a1 - a3);
                out[0] = t0 + t2;
                out[1] = (t1 + t3) * tw[0];
                out[2] = (t0 - t2) * tw[1];
                out[3] = (t1 - t3) * tw[2];
            }
            return;
        }
        for j in 0..m {
            let w1 = self.twiddles[3 * j];
            let w2 = self.twiddles[3 * j + 1];
            let w3 = self.twiddles[3 * j + 2];
            let x0 = &x[s * j..s * j + s];
            let x1 = &x[s * (j + m)..s * (j + m) + s];
            let x2 = &x[s * (j + 2 * m)..s * (j + 2 * m) + s];
            let x3 = &x[s * (j + 3 * m)..s * (j + 3 * m) + s];
            let (y0, rest) = y[4 * s * j..4 * s * (j + 1)].split_at_mut(s);
            let (y1, rest) = rest.split_at_mut(s);
            let (y2, y3) = rest.split_at_mut(s);
            for q in 0..s {
                let t0 = x0[q] + x2[q];
                let t1 = x0[q] - x2[q];
                let t2 = x1[q] + x3[q];
                let t3 = mul_neg_i(x1[q] - x3[q]);
                y0[q] = t0 + t2;
                y1[q] = (t1 + t3) * w1;
                y2[q] = (t0 - t2) * w2;
                y3[q] = (t1 - t3) * w3;
            }
        }
    }

    fn generic(&self, x: &[Complex64], y: &mut [Complex64]) {
        let (p, m, s) = (self.radix, self.span, self.stride);
        let mut gathered = [Complex64::new(0.0, 0.0); MAX_STAGE_RADIX];
        for j in 0..m {
            let tw = &self.twiddles[(p - 1) * j..(p - 1) * (j + 1)];
            for q in 0..s {
                for (r, slot) in gathered[..p].iter_mut().enumerate() {
                    *slot = x[q + s * (j + r * m)];
                }
                for k in 0..p {
                    let mut acc = gathered[0];
                    let mut idx = 0;
                    for a in &gathered[1..p] {
                        idx += k;
                        if idx >= p {
                            idx -= p;
                        }
                        acc += *a * self.roots[idx];
                    }
                    let out = if k == 0 { acc } else { acc * tw[k - 1] };
                    y[q + s * (p * j + k)] = out;
                }
            }
        }
    }
}

struct Stockham {
    len: usize,
    stages: Vec<Stage>,
}

impl Stockham {
    fn new(len: usize, radices: &[usize]) -> Self {
        Self::batched(len, radices, 1)
    }

    /// Transforms `batch` interleaved sequences at once: element `i` of
    /// sequence `b` lives at `i * batch + b`. Works because every stage
    /// indexes as `q + stride * i` with `q < stride`.
    fn batched(len: usize, radices: &[usize], batch: usize) -> Self {
        let mut stages = Vec::with_capacity(radices.len());
        let mut remaining = len;
        let mut stride = batch;
        for &radix in radices {
            remaining /= radix;
            stages.push(Stage::new(radix, remaining, stride));
            stride *= radix;
        }
        Self { len, stages }
    }

    fn forward(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        let scratch = &mut scratch[..data.len()];
        let mut in_data = true;
        for stage in &self.stages {
            if in_data {
                stage.apply(data, scratch);
            } else {
                stage.apply(scratch, data);
            }
            in_data = !in_data;
        }
        if !in_data {
            data.copy_from_slice(scratch);
        }
    }
}

struct Bluestein {
    len: usize,
    inner: Stockham,
    chirp: Vec<Complex64>,
    /// FFT of the conjugate chirp kernel, pre-scaled by `1/inner.len`.
    kernel: Vec<Complex64>,
}

impl Bluestein {
    fn new(len: usize) -> Self {
        let padded = (2 * len - 1).next_power_of_two();
        let inner = Stockham::new(padded, &factorize(padded));
        let chirp: Vec<Complex64> = (0..len)
            .map(|k| root_of_unity((k * k) % (2 * len), 2 * len))
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); padded];
        kernel[0] = chirp[0].conj();
        for k in 1..len {
            kernel[k] = chirp[k].conj();
            kernel[padded - k] = chirp[k].conj();
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); padded];
        inner.forward(&mut kernel, &mut scratch);
        let scale = 1.0 / padded as f64;
        for v in kernel.iter_mut() {
            *v *= scale;
        }
        Self { len, inner, chirp, kernel }
    }

    fn forward(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        let padded = self.inner.len;
        let (work, inner_scratch) = scratch[..2 * padded].split_at_mut(padded);
        for ((w, &x), &c) in work.iter_mut().zip(data.iter()).zip(&self.chirp) {
            *w = x * c;
        }
        for w in work[self.len..].iter_mut() {
            *w = Complex64::new(0.0, 0.0);
        }
        self.inner.forward(work, inner_scratch);
        // pointwise product, then inverse via conjugation
        for (w, &k) in work.iter_mut().zip(&self.kernel) {
            *w = (*w * k).conj();
        }
        self.inner.forward(work, inner_scratch);
        for ((x, &w), &c) in data.iter_mut().zip(work.iter()).zip(&self.chirp) {
            *x = w.conj() * c;
        }
    }
}

enum Algorithm {
    Identity,
    Stockham(Stockham),
    Bluestein(Box<Bluestein>),
}

/// One-dimensional complex FFT plan.
pub struct FftPlan {
    len: usize,
    algorithm: Algorithm,
}

impl FftPlan {
    /// Builds a plan for `len` points. `len == 0` is treated like `len == 1`.
    pub fn new(len: usize) -> Self {
        let len = len.max(1);
        let algorithm = if len == 1 {
            Algorithm::Identity
        } else {
            let radices = factorize(len);
            if radices.iter().any(|&r| r > MAX_STAGE_RADIX) {
                Algorithm::Bluestein(Box::new(Bluestein::new(len)))
            } else {
                Algorithm::Stockham(Stockham::new(len, &radices))
            }
        };
        Self { len, algorithm }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Scratch length required by [`FftPlan::forward`].
    pub fn scratch_len(&self) -> usize {
        match &self.algorithm {
            Algorithm::Identity => 0,
            Algorithm::Stockham(s) => s.len,
            Algorithm::Bluestein(b) => 2 * b.inner.len,
        }
    }

    /// In-place forward transform of `data[..len]`.
    ///
    /// Panics if `data` or `scratch` is shorter than required.
    pub fn forward(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        let data = &mut data[..self.len];
        match &self.algorithm {
            Algorithm::Identity => {}
            Algorithm::Stockham(s) => s.forward(data, scratch),
            Algorithm::Bluestein(b) => b.forward(data, scratch),
        }
    }

    /// In-place unnormalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        let data = &mut data[..self.len];
        for v in data.iter_mut() {
            *v = v.conj();
        }
        self.forward(data, scratch);
        for v in data.iter_mut() {
            *v = v.conj();
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const BLOCK: usize = 16;
    for rb in (0..rows).step_by(BLOCK) {
        let r_end = (rb + BLOCK).min(rows);
        for cb in (0..cols).step_by(BLOCK) {
            let c_end = (cb + BLOCK).min(cols);
            for r in rb..r_end {
                let row = &src[r * cols..(r + 1) * cols];
                for c in cb..c_end {
                    dst[c * rows + r] = row[c];
                }
            }
        }
    }
}

/// Columns per batched block; a block of a few hundred rows stays in cache.
const COL_BLOCK: usize = 16;

/// Row-major 2D transform. Rows are transformed one by one; columns are
/// copied out in blocks of [`COL_BLOCK`] and transformed together as one
/// batched pass when the column length has a direct factorization,
/// otherwise through a transpose.
pub struct Fft2d {
    height: usize,
    width: usize,
    rows: FftPlan,
    cols: Columns,
}

enum Columns {
    Batched { block: Stockham, tail: Option<Stockham> },
    Transposed(FftPlan),
}

impl Fft2d {
    pub fn new(height: usize, width: usize) -> Self {
        let cols = match FftPlan::new(height).algorithm {
            Algorithm::Stockham(_) => {
                let radices = factorize(height);
                let block = width.clamp(1, COL_BLOCK);
                let tail = width % block;
                Columns::Batched {
                    block: Stockham::batched(height, &radices, block),
                    tail: (tail > 0).then(|| Stockham::batched(height, &radices, tail)),
                }
            }
            _ => Columns::Transposed(FftPlan::new(height)),
        };
        Self { height, width, rows: FftPlan::new(width), cols }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Scratch length required by the `*_with_scratch` entry points.
    pub fn scratch_len(&self) -> usize {
        let n = self.height * self.width;
        match &self.cols {
            Columns::Batched { .. } => (2 * self.height * COL_BLOCK).max(self.rows.scratch_len()),
            Columns::Transposed(p) => n + self.rows.scratch_len().max(p.scratch_len()),
        }
    }

    /// Unnormalized forward transform of an `H x W` row-major buffer.
    pub fn forward(&self, data: &mut [Complex64]) {
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len()];
        self.forward_with_scratch(data, &mut scratch);
    }

    pub fn forward_with_scratch(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        assert_eq!(data.len(), self.height * self.width, "buffer does not match plan dims");
        for row in data.chunks_exact_mut(self.width) {
            self.rows.forward(row, scratch);
        }
        if self.height == 1 {
            return;
        }
        match &self.cols {
            Columns::Batched { block, tail } => {
                let (h, w) = (self.height, self.width);
                let mut first = 0;
                while first < w {
                    let b = (w - first).min(COL_BLOCK);
                    let plan = if b == COL_BLOCK.min(w) { block } else { tail.as_ref().expect("tail plan") };
                    let (buf, rest) = scratch.split_at_mut(h * b);
                    for (dst, src) in buf.chunks_exact_mut(b).zip(data.chunks_exact(w)) {
                        dst.copy_from_slice(&src[first..first + b]);
                    }
                    plan.forward(buf, rest);
                    for (src, dst) in buf.chunks_exact(b).zip(data.chunks_exact_mut(w)) {
                        dst[first..first + b].copy_from_slice(src);
                    }
                    first += b;
                }
            }
            Columns::Transposed(plan) => {
                let (transposed, rest) = scratch.split_at_mut(data.len());
                transpose(data, transposed, self.height, self.width);
                for col in transposed.chunks_exact_mut(self.height) {
                    plan.forward(col, rest);
                }
                transpose(transposed, data, self.width, self.height);
            }
        }
    }

    /// Inverse transform including the `1/(H·W)` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len()];
        self.inverse_with_scratch(data, &mut scratch);
    }

    pub fn inverse_with_scratch(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        for v in data.iter_mut() {
            *v = v.conj();
        }
        self.forward_with_scratch(data, scratch);
        let scale = 1.0 / (self.height * self.width) as f64;
        for v in data.iter_mut() {
            *v = v.conj() * scale;
        }
    }
}
