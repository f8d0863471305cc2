//! Multi-layer zero-mean convolution operator `U`, its adjoint, and two
//! spectral-norm estimators used to build the unit-norm operator `W = U / ||U||`.
//!
//! Every layer is a zero-padded ("same") multi-channel cross-correlation:
//!
//! ```text
//! out[o, y, x] = sum_i sum_{a,b} K[o, i, a, b] * in[i, y + a - r, x + b - r]
//! ```
//!
//! with `r = (k - 1) / 2`. Kernels are stored raw and every `(o, i)` slice is
//! centered (raw minus its own mean) when the stack is built, so the effective
//! operator annihilates constant images.

use std::f64::consts::PI;
use std::io::{self, Write};

use ndarray::{s, Array2, Array3, Array4, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg;

/// Seed of the deterministic start vector of the power method.
pub const POWER_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack {
    raw: Vec<Array4<f64>>,
    kernels: Vec<Array4<f64>>,
}

impl ConvStack {
    /// Builds a stack from raw kernels of shape `(c_out, c_in, k, k)`. The first
    /// layer must take one input channel and consecutive layers must chain.
    pub fn new(raw: Vec<Array4<f64>>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidArgument("convolution stack needs at least one layer".into()));
        }
        let mut c_prev = 1;
        for (l, k) in raw.iter().enumerate() {
            let (co, ci, kh, kw) = k.dim();
            if kh != kw || kh % 2 == 0 {
                return Err(Error::InvalidArgument(format!(
                    "layer {l}: kernels must be square with odd size, got {kh}x{kw}"
                )));
            }
            if ci != c_prev || co == 0 {
                return Err(Error::Shape(format!(
                    "layer {l}: expected {c_prev} input channels, got {ci} (outputs {co})"
                )));
            }
            c_prev = co;
        }
        let kernels = raw.iter().map(zero_mean).collect();
        Ok(Self { raw, kernels })
    }

    /// Random raw kernels with the given output widths, `k x k` each, i.i.d.
    /// Gaussian scaled by `1 / sqrt(c_in k^2)`.
    pub fn random(widths: &[usize], k: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = 1;
        let mut raw = Vec::with_capacity(widths.len());
        for &c_out in widths {
            let scale = 1.0 / ((c_in * k * k) as f64).sqrt();
            raw.push(Array4::from_shape_simple_fn((c_out, c_in, k, k), || {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * scale
            }));
            c_in = c_out;
        }
        Self::new(raw)
    }

    pub fn raw(&self) -> &[Array4<f64>] {
        &self.raw
    }

    /// Zero-mean kernels actually applied.
    pub fn kernels(&self) -> &[Array4<f64>] {
        &self.kernels
    }

    pub fn num_layers(&self) -> usize {
        self.raw.len()
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.last().map(|k| k.dim().0).unwrap_or(0)
    }

    pub fn widths(&self) -> Vec<usize> {
        self.kernels.iter().map(|k| k.dim().0).collect()
    }

    /// Side length of the equivalent single-convolution kernel.
    pub fn field_of_view(&self) -> usize {
        self.kernels.iter().map(|k| k.dim().2).sum::<usize>() + 1 - self.kernels.len()
    }

    fn is_zero(&self) -> bool {
        self.kernels.iter().all(|k| k.iter().all(|v| *v == 0.0))
    }

    pub fn forward(&self, image: &Array2<f64>) -> Array3<f64> {
        let mut h = image.view().insert_axis(Axis(0)).to_owned();
        for k in &self.kernels {
            h = correlate(h.view(), k);
        }
        h
    }

    /// Forward pass that keeps every layer input (the last entry is the output).
    fn forward_trace(&self, image: &Array2<f64>) -> Vec<Array3<f64>> {
        let mut trace = Vec::with_capacity(self.kernels.len() + 1);
        trace.push(image.view().insert_axis(Axis(0)).to_owned());
        for k in &self.kernels {
            let next = correlate(trace.last().unwrap().view(), k);
            trace.push(next);
        }
        trace
    }

    pub fn adjoint(&self, features: &Array3<f64>) -> Array2<f64> {
        let mut g = features.clone();
        for k in self.kernels.iter().rev() {
            g = correlate_adjoint(g.view(), k);
        }
        g.index_axis_move(Axis(0), 0)
    }

    /// Gradient of `<cotangent, U image>` with respect to the raw kernels
    /// (the zero-mean reparameterization is differentiated through).
    pub fn kernel_vjp(&self, image: &Array2<f64>, cotangent: &Array3<f64>) -> Vec<Array4<f64>> {
        let trace = self.forward_trace(image);
        let mut grads = vec![Array4::zeros((0, 0, 0, 0)); self.kernels.len()];
        let mut g = cotangent.clone();
        for l in (0..self.kernels.len()).rev() {
            let k = &self.kernels[l];
            grads[l] = zero_mean(&kernel_gradient(trace[l].view(), g.view(), k.dim().2));
            if l > 0 {
                g = correlate_adjoint(g.view(), k);
            }
        }
        grads
    }

    /// Equivalent single-convolution kernels, one `K_s x K_s` kernel per output
    /// channel, in the same cross-correlation convention as the layers.
    pub fn equivalent_kernels(&self) -> Array3<f64> {
        let mut e = Array3::<f64>::ones((1, 1, 1));
        for k in &self.kernels {
            let (co, ci, ks, _) = k.dim();
            let size = e.dim().1 + ks - 1;
            let mut next = Array3::zeros((co, size, size));
            for o in 0..co {
                for i in 0..ci {
                    let prev = e.index_axis(Axis(0), i);
                    for a in 0..ks {
                        for b in 0..ks {
                            let w = k[[o, i, a, b]];
                            if w == 0.0 {
                                continue;
                            }
                            let mut dst = next.slice_mut(s![o, a..a + prev.dim().0, b..b + prev.dim().1]);
                            dst.scaled_add(w, &prev);
                        }
                    }
                }
            }
            e = next;
        }
        e
    }

    /// Kernel of the single-channel operator `U^T U`, of size `(2K_s - 1)^2`,
    /// centered at index `K_s - 1`: the sum over channels of the
    /// autocorrelations of the equivalent kernels.
    pub fn gram_kernel(&self) -> Array2<f64> {
        let e = self.equivalent_kernels();
        let (nc, ks, _) = e.dim();
        let size = 2 * ks - 1;
        let mut out = Array2::zeros((size, size));
        for c in 0..nc {
            let ec = e.index_axis(Axis(0), c);
            for u in 0..ks {
                for v in 0..ks {
                    let w = ec[[u, v]];
                    if w == 0.0 {
                        continue;
                    }
                    // out[s] += E[p] E[p + s]  ->  at s = q - p
                    let mut dst = out.slice_mut(s![ks - 1 - u..2 * ks - 1 - u, ks - 1 - v..2 * ks - 1 - v]);
                    dst.scaled_add(w, &ec);
                }
            }
        }
        out
    }

    /// Spectrum of `U^T U` under circular boundary conditions on an `h x w`
    /// grid: the 2D DFT of the zero-padded (wrapped) gram kernel.
    pub fn gram_spectrum(&self, h: usize, w: usize) -> Result<Array2<f64>> {
        let ks = self.field_of_view();
        let support = 2 * ks - 1;
        if h < support || w < support {
            return Err(Error::InvalidArgument(format!(
                "DFT grid {h}x{w} smaller than the composed kernel support {support}x{support}"
            )));
        }
        let g = self.gram_kernel();
        let mut buf = vec![Complex64::new(0.0, 0.0); h * w];
        let c = ks as isize - 1;
        for ((u, v), val) in g.indexed_iter() {
            let y = (u as isize - c).rem_euclid(h as isize) as usize;
            let x = (v as isize - c).rem_euclid(w as isize) as usize;
            buf[y * w + x].re += val;
        }
        fft2(&mut buf, h, w);
        Ok(Array2::from_shape_fn((h, w), |(y, x)| buf[y * w + x].norm()))
    }

    /// `||U||` under circular boundary conditions, from the DFT of the gram kernel.
    pub fn spectral_norm_dft(&self, h: usize, w: usize) -> Result<f64> {
        if self.is_zero() {
            self.gram_spectrum(h, w)?;
            return Ok(0.0);
        }
        let spec = self.gram_spectrum(h, w)?;
        Ok(spec.iter().cloned().fold(0.0, f64::max).sqrt())
    }

    /// DFT norm estimate together with its gradient with respect to the raw
    /// kernels, evaluated at the maximizing frequency.
    pub fn spectral_norm_dft_with_grad(&self, h: usize, w: usize) -> Result<(f64, Vec<Array4<f64>>)> {
        let spec = self.gram_spectrum(h, w)?;
        let zero_grads = || self.kernels.iter().map(|k| Array4::zeros(k.raw_dim())).collect();
        let (mut best, mut arg) = (0.0, (0, 0));
        for ((y, x), v) in spec.indexed_iter() {
            if *v > best {
                best = *v;
                arg = (y, x);
            }
        }
        if best == 0.0 {
            return Ok((0.0, zero_grads()));
        }
        let omega = (2.0 * PI * arg.0 as f64 / h as f64, 2.0 * PI * arg.1 as f64 / w as f64);
        let transfer: Vec<Vec<Vec<Complex64>>> = self.kernels.iter().map(|k| layer_transfer(k, omega)).collect();
        // prefix[l]: response of layers 0..l to the single input channel
        let mut prefix = vec![vec![Complex64::new(1.0, 0.0)]];
        for t in &transfer {
            let next = mat_vec(t, prefix.last().unwrap());
            prefix.push(next);
        }
        let total = prefix.last().unwrap().clone();
        let q: f64 = total.iter().map(|z| z.norm_sqr()).sum();
        let norm = q.sqrt();
        // backward: g = A^H total for the product A of the layers after l
        let mut g = total;
        let mut grads = Vec::with_capacity(self.kernels.len());
        for l in (0..self.kernels.len()).rev() {
            let k = &self.kernels[l];
            let (co, ci, ks, _) = k.dim();
            let r = (ks / 2) as f64;
            let b = &prefix[l];
            let mut grad = Array4::zeros(k.raw_dim());
            for o in 0..co {
                for i in 0..ci {
                    let coef = g[o].conj() * b[i];
                    for a in 0..ks {
                        for bb in 0..ks {
                            let phase = omega.0 * (a as f64 - r) + omega.1 * (bb as f64 - r);
                            let e = Complex64::from_polar(1.0, phase);
                            // dQ/dK = 2 Re(..) and dn = dQ / (2n)
                            grad[[o, i, a, bb]] = (coef * e).re / norm;
                        }
                    }
                }
            }
            grads.push(zero_mean(&grad));
            g = mat_h_vec(&transfer[l], &g);
        }
        grads.reverse();
        Ok((norm, grads))
    }

    /// `||U||` for zero-padded boundaries by power iteration on `U^T U`,
    /// started from a seeded Gaussian image.
    pub fn spectral_norm_power(&self, h: usize, w: usize, iters: usize) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        linalg::power_iteration(|x| self.adjoint(&self.forward(x)), (h, w), iters, POWER_SEED).sqrt()
    }

    /// Impulse responses of the equivalent single convolutions (the kernels
    /// flipped into convolution orientation), one per output channel.
    pub fn impulse_responses(&self) -> Array3<f64> {
        let mut e = self.equivalent_kernels();
        e.invert_axis(Axis(1));
        e.invert_axis(Axis(2));
        e
    }

    /// Writes the impulse responses as CSV rows `channel,row,col,value`.
    pub fn write_impulse_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "channel,row,col,value")?;
        for ((c, y, x), v) in self.impulse_responses().indexed_iter() {
            writeln!(out, "{c},{y},{x},{v}")?;
        }
        Ok(())
    }
}

fn zero_mean(k: &Array4<f64>) -> Array4<f64> {
    let mut out = k.clone();
    let (co, ci, _, _) = k.dim();
    for o in 0..co {
        for i in 0..ci {
            let mut slice = out.slice_mut(s![o, i, .., ..]);
            let m = slice.mean().unwrap_or(0.0);
            slice -= m;
        }
    }
    out
}

/// Row ranges `(dst_start, src_start, len)` for a shift `d` on an axis of length `n`:
/// `dst[y] += src[y + d]` for all valid `y`.
fn shifted_range(n: usize, d: isize) -> Option<(usize, usize, usize)> {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).min(n as isize);
    if hi as isize <= lo as isize {
        return None;
    }
    let hi = hi as usize;
    Some((lo, (lo as isize + d) as usize, hi - lo))
}

fn correlate(input: ArrayView3<f64>, kernel: &Array4<f64>) -> Array3<f64> {
    let (co, _, ks, _) = kernel.dim();
    correlate_padded(input, co, ks, |o, i, a, b| kernel[[o, i, a, b]])
}

/// Adjoint of [`correlate`]: a correlation with the flipped, channel-swapped
/// kernel (exact for odd kernels and zero padding).
fn correlate_adjoint(output: ArrayView3<f64>, kernel: &Array4<f64>) -> Array3<f64> {
    let (_, ci, ks, _) = kernel.dim();
    correlate_padded(output, ci, ks, |i, o, a, b| kernel[[o, i, ks - 1 - a, ks - 1 - b]])
}

/// Zero-padded "same" correlation `out[o][y][x] += k(o, i, a, b) * in[i][y + a - r][x + b - r]`.
///
/// The input is copied into planes with an `r`-wide zero border, so every
/// kernel tap becomes one long contiguous axpy over the flattened rows. The
/// border columns of the accumulator pick up junk and are dropped.
fn correlate_padded(input: ArrayView3<f64>, co: usize, ks: usize, k: impl Fn(usize, usize, usize, usize) -> f64) -> Array3<f64> {
    let (ci, h, w) = input.dim();
    let r = ks / 2;
    let pw = w + 2 * r;
    let plane_len = (h + 2 * r) * pw;
    let mut padded = vec![0.0; ci * plane_len];
    for i in 0..ci {
        for y in 0..h {
            let row = &mut padded[i * plane_len + (y + r) * pw + r..][..w];
            for (d, s) in row.iter_mut().zip(input.slice(ndarray::s![i, y, ..])) {
                *d = *s;
            }
        }
    }
    let span = h * pw - 2 * r;
    let mut acc = vec![0.0; h * pw];
    let mut out = Array3::zeros((co, h, w));
    for o in 0..co {
        acc.fill(0.0);
        let dst = &mut acc[r..r + span];
        for i in 0..ci {
            let plane = &padded[i * plane_len..(i + 1) * plane_len];
            for a in 0..ks {
                // taps of one kernel row in groups of up to three per pass
                let mut b = 0;
                while b < ks {
                    let n = (ks - b).min(3);
                    let src = &plane[a * pw + b..];
                    match n {
                        3 => axpy3(dst, src, [k(o, i, a, b), k(o, i, a, b + 1), k(o, i, a, b + 2)]),
                        2 => axpy3(dst, src, [k(o, i, a, b), k(o, i, a, b + 1), 0.0]),
                        _ => axpy3(dst, src, [k(o, i, a, b), 0.0, 0.0]),
                    }
                    b += n;
                }
            }
        }
        for y in 0..h {
            for (d, s) in out.slice_mut(ndarray::s![o, y, ..]).iter_mut().zip(&acc[y * pw + r..y * pw + r + w]) {
                *d = *s;
            }
        }
    }
    out
}

/// `dst[j] += w0 src[j] + w1 src[j + 1] + w2 src[j + 2]`.
fn axpy3(dst: &mut [f64], src: &[f64], w: [f64; 3]) {
    let n = dst.len();
    match w {
        [0.0, 0.0, 0.0] => {}
        [w0, 0.0, 0.0] => {
            for (d, x) in dst.iter_mut().zip(&src[..n]) {
                *d += w0 * x;
            }
        }
        [w0, w1, 0.0] => {
            for ((d, x), y) in dst.iter_mut().zip(&src[..n]).zip(&src[1..n + 1]) {
                *d += w0 * x + w1 * y;
            }
        }
        [w0, w1, w2] => {
            for (((d, x), y), z) in dst.iter_mut().zip(&src[..n]).zip(&src[1..n + 1]).zip(&src[2..n + 2]) {
                *d += w0 * x + w1 * y + w2 * z;
            }
        }
    }
}

fn kernel_gradient(input: ArrayView3<f64>, out_grad: ArrayView3<f64>, ks: usize) -> Array4<f64> {
    let (ci, h, w) = input.dim();
    let co = out_grad.dim().0;
    let r = (ks / 2) as isize;
    let input = input.as_standard_layout();
    let og = out_grad.as_standard_layout();
    let src = input.as_slice().unwrap();
    let gsrc = og.as_slice().unwrap();
    let mut grad = Array4::zeros((co, ci, ks, ks));
    for o in 0..co {
        let gp = &gsrc[o * h * w..(o + 1) * h * w];
        for i in 0..ci {
            let plane = &src[i * h * w..(i + 1) * h * w];
            for a in 0..ks {
                let Some((y0, sy0, ny)) = shifted_range(h, a as isize - r) else { continue };
                for b in 0..ks {
                    let Some((x0, sx0, nx)) = shifted_range(w, b as isize - r) else { continue };
                    let mut acc = 0.0;
                    for y in 0..ny {
                        let d = &gp[(y0 + y) * w + x0..(y0 + y) * w + x0 + nx];
                        let s = &plane[(sy0 + y) * w + sx0..(sy0 + y) * w + sx0 + nx];
                        acc += d.iter().zip(s).map(|(p, q)| p * q).sum::<f64>();
                    }
                    grad[[o, i, a, b]] = acc;
                }
            }
        }
    }
    grad
}

/// Per-layer transfer matrix `(c_out x c_in)` at frequency `omega`.
fn layer_transfer(k: &Array4<f64>, omega: (f64, f64)) -> Vec<Vec<Complex64>> {
    let (co, ci, ks, _) = k.dim();
    let r = (ks / 2) as f64;
    (0..co)
        .map(|o| {
            (0..ci)
                .map(|i| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..ks {
                        for b in 0..ks {
                            let phase = omega.0 * (a as f64 - r) + omega.1 * (b as f64 - r);
                            acc += Complex64::from_polar(k[[o, i, a, b]], phase);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn mat_vec(m: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn mat_h_vec(m: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
    let ci = m.first().map(|r| r.len()).unwrap_or(0);
    (0..ci).map(|i| m.iter().zip(v).map(|(row, vo)| row[i].conj() * vo).sum()).collect()
}

/// In-place unnormalized 2D forward DFT of a row-major `h x w` buffer.
pub(crate) fn fft2(buf: &mut [Complex64], h: usize, w: usize) {
    fft2_dir(buf, h, w, false)
}

pub(crate) fn fft2_dir(buf: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row_fft.process(buf);
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
}

/// How the cached norm of a [`NormalizedConv`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormMethod {
    /// Circular-boundary DFT estimate on an `h x w` grid.
    DftEstimate { h: usize, w: usize },
    /// Zero-padded power method on `h x w` images.
    PowerMethod { h: usize, w: usize, iters: usize },
    /// Norm supplied from outside (e.g. a checkpoint).
    Given,
}

/// The unit-norm operator `W = U / ||U||`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedConv {
    stack: ConvStack,
    norm: f64,
    method: NormMethod,
}

impl NormalizedConv {
    pub fn new(stack: ConvStack, method: NormMethod) -> Result<Self> {
        let norm = match method {
            NormMethod::DftEstimate { h, w } => stack.spectral_norm_dft(h, w)?,
            NormMethod::PowerMethod { h, w, iters } => stack.spectral_norm_power(h, w, iters),
            NormMethod::Given => {
                return Err(Error::InvalidArgument("use with_norm to supply a norm".into()));
            }
        };
        Self::with_norm(stack, norm, method)
    }

    pub fn with_norm(stack: ConvStack, norm: f64, method: NormMethod) -> Result<Self> {
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument(format!("operator norm must be positive, got {norm}")));
        }
        Ok(Self { stack, norm, method })
    }

    pub fn stack(&self) -> &ConvStack {
        &self.stack
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn method(&self) -> NormMethod {
        self.method
    }

    pub fn out_channels(&self) -> usize {
        self.stack.out_channels()
    }

    pub fn apply(&self, image: &Array2<f64>) -> Array3<f64> {
        let mut z = self.stack.forward(image);
        z /= self.norm;
        z
    }

    pub fn adjoint(&self, features: &Array3<f64>) -> Array2<f64> {
        let mut x = self.stack.adjoint(features);
        x /= self.norm;
        x
    }

    /// Power-method estimate of `||W||` on `h x w` images.
    pub fn operator_norm(&self, h: usize, w: usize, iters: usize) -> f64 {
        self.stack.spectral_norm_power(h, w, iters) / self.norm
    }
}
