//! Linear measurement operators `H` with exact adjoints, Cartesian k-space
//! masks, and noisy measurement simulation `y = H x + n`.
//!
//! Measurements are always real vectors. Complex k-space samples are stored
//! as interleaved `(re, im)` pairs so that the data term stays a real quadratic.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use crate::convstack::fft2_dir;
use crate::error::{Error, Result};
use crate::linalg;

/// Seed of the power iteration used for `||H||`.
pub const NORM_SEED: u64 = 0;
pub const NORM_ITERS: usize = 200;
/// Full-scale measurement noise: CT detector readings on 512x512 images.
pub const CT_NOISE_FULL_SCALE: f64 = 2.0;
/// Full-scale measurement noise: MRI k-space, per real/imaginary part.
pub const MRI_NOISE_FULL_SCALE: f64 = 1e-4;

/// Selected k-space columns. Indices are in centered (fft-shifted) order:
/// column `width / 2` is the zero frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianMask {
    pub width: usize,
    pub acceleration: f64,
    pub center_fraction: f64,
    pub selected_columns: Vec<usize>,
}

impl CartesianMask {
    pub fn center_count(&self) -> usize {
        (self.width as f64 * self.center_fraction).floor() as usize
    }

    /// First centered index of the fully sampled low-frequency band.
    pub fn center_start(&self) -> usize {
        (self.width - self.center_count() + 1) / 2
    }

    pub fn contains(&self, column: usize) -> bool {
        self.selected_columns.binary_search(&column).is_ok()
    }

    /// Selected columns as indices into an unshifted DFT.
    pub fn dft_columns(&self) -> Vec<usize> {
        let half = self.width / 2;
        self.selected_columns.iter().map(|c| (c + self.width - half) % self.width).collect()
    }

    /// One row of 0/1 values per column, as CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "column,selected")?;
        for c in 0..self.width {
            writeln!(out, "{c},{}", u8::from(self.contains(c)))?;
        }
        Ok(())
    }
}

/// Cartesian undersampling mask: all `floor(width * center_fraction)` central
/// columns plus uniformly drawn other columns, `floor(width / acceleration)` in
/// total.
pub fn make_cartesian_mask(width: usize, acceleration: f64, center_fraction: f64, seed: u64) -> Result<CartesianMask> {
    if !(acceleration >= 1.0) {
        return Err(Error::InvalidArgument(format!("acceleration must be >= 1, got {acceleration}")));
    }
    if !(0.0..=1.0).contains(&center_fraction) {
        return Err(Error::InvalidArgument(format!("center fraction must lie in [0, 1], got {center_fraction}")));
    }
    let n_center = (width as f64 * center_fraction).floor() as usize;
    let n_total = (width as f64 / acceleration).floor() as usize;
    if n_center > n_total {
        return Err(Error::Infeasible(format!(
            "{n_center} center columns exceed the {n_total} columns allowed by acceleration {acceleration}"
        )));
    }
    let start = (width - n_center + 1) / 2;
    let mut selected: Vec<usize> = (start..start + n_center).collect();
    let others: Vec<usize> = (0..width).filter(|c| *c < start || *c >= start + n_center).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in index::sample(&mut rng, others.len(), n_total - n_center) {
        selected.push(others[i]);
    }
    selected.sort_unstable();
    Ok(CartesianMask { width, acceleration, center_fraction, selected_columns: selected })
}

/// Parallel-beam geometry. Angles are `k pi / num_angles`; detectors are
/// centered on the rotation axis with the given spacing (in pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct RadonGeometry {
    pub rows: usize,
    pub cols: usize,
    pub num_angles: usize,
    pub num_detectors: usize,
    pub detector_spacing: f64,
}

impl RadonGeometry {
    /// Desk-scale default: 64x64 images, 60 angles, 95 unit-spaced detectors.
    pub fn desk() -> Self {
        Self { rows: 64, cols: 64, num_angles: 60, num_detectors: 95, detector_spacing: 1.0 }
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.num_angles).map(|k| k as f64 * PI / self.num_angles as f64).collect()
    }

    /// Visits every non-zero weight `(measurement index, pixel index, weight)`.
    ///
    /// Pixel-driven model: each pixel center is projected onto the detector
    /// axis and its value split between the two nearest bins by linear
    /// interpolation, scaled by `pixel area / detector spacing` so that
    /// sinogram entries approximate line integrals.
    fn for_each_weight(&self, mut visit: impl FnMut(usize, usize, f64)) {
        let nd = self.num_detectors;
        let center_det = (nd as f64 - 1.0) / 2.0;
        let cy = (self.rows as f64 - 1.0) / 2.0;
        let cx = (self.cols as f64 - 1.0) / 2.0;
        let scale = 1.0 / self.detector_spacing;
        for (k, theta) in self.angles().into_iter().enumerate() {
            let (sin, cos) = theta.sin_cos();
            for r in 0..self.rows {
                let y = cy - r as f64;
                for c in 0..self.cols {
                    let x = c as f64 - cx;
                    let pos = (x * cos + y * sin) / self.detector_spacing + center_det;
                    let j = pos.floor();
                    let frac = pos - j;
                    let j = j as isize;
                    let pixel = r * self.cols + c;
                    if j >= 0 && (j as usize) < nd && frac < 1.0 {
                        visit(k * nd + j as usize, pixel, (1.0 - frac) * scale);
                    }
                    if j + 1 >= 0 && ((j + 1) as usize) < nd && frac > 0.0 {
                        visit(k * nd + (j + 1) as usize, pixel, frac * scale);
                    }
                }
            }
        }
    }
}

/// Largest number of pixel-angle pairs for which Radon weights are cached.
pub const RADON_CACHE_LIMIT: usize = 1 << 24;

/// Radon transform with its interpolation weights stored row-compressed
/// (one row per measurement), or recomputed on the fly for large geometries.
#[derive(Debug, Clone, PartialEq)]
pub struct RadonOp {
    pub geometry: RadonGeometry,
    weights: Option<Arc<RadonWeights>>,
}

#[derive(Debug, PartialEq)]
struct RadonWeights {
    row_start: Vec<usize>,
    pixels: Vec<u32>,
    values: Vec<f64>,
}

impl RadonOp {
    pub fn new(geometry: RadonGeometry) -> Self {
        let pairs = geometry.rows * geometry.cols * geometry.num_angles;
        let weights = (pairs <= RADON_CACHE_LIMIT).then(|| Arc::new(Self::build(&geometry)));
        Self { geometry, weights }
    }

    fn build(g: &RadonGeometry) -> RadonWeights {
        let m = g.num_angles * g.num_detectors;
        let mut row_start = vec![0usize; m + 1];
        g.for_each_weight(|i, _, _| row_start[i + 1] += 1);
        for i in 0..m {
            row_start[i + 1] += row_start[i];
        }
        let nnz = row_start[m];
        let mut fill = row_start.clone();
        let mut pixels = vec![0u32; nnz];
        let mut values = vec![0.0; nnz];
        g.for_each_weight(|i, p, v| {
            pixels[fill[i]] = p as u32;
            values[fill[i]] = v;
            fill[i] += 1;
        });
        RadonWeights { row_start, pixels, values }
    }

    fn forward(&self, x: &[f64]) -> Array1<f64> {
        let g = &self.geometry;
        let mut out = Array1::zeros(g.num_angles * g.num_detectors);
        match &self.weights {
            Some(w) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let (a, b) = (w.row_start[i], w.row_start[i + 1]);
                    *o = w.pixels[a..b].iter().zip(&w.values[a..b]).map(|(p, v)| v * x[*p as usize]).sum();
                }
            }
            None => g.for_each_weight(|m, p, wgt| out[m] += wgt * x[p]),
        }
        out
    }

    fn backward(&self, y: &Array1<f64>) -> Vec<f64> {
        let g = &self.geometry;
        let mut out = vec![0.0; g.rows * g.cols];
        match &self.weights {
            Some(w) => {
                for (i, yi) in y.iter().enumerate() {
                    for k in w.row_start[i]..w.row_start[i + 1] {
                        out[w.pixels[k] as usize] += w.values[k] * yi;
                    }
                }
            }
            None => g.for_each_weight(|m, p, wgt| out[p] += wgt * y[m]),
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementOp {
    Identity { rows: usize, cols: usize },
    MaskedFourier { rows: usize, cols: usize, mask: CartesianMask },
    Radon(RadonOp),
    Dense { rows: usize, cols: usize, matrix: Array2<f64> },
}

impl MeasurementOp {
    pub fn identity(rows: usize, cols: usize) -> Self {
        Self::Identity { rows, cols }
    }

    pub fn masked_fourier(rows: usize, mask: CartesianMask) -> Self {
        Self::MaskedFourier { rows, cols: mask.width, mask }
    }

    pub fn radon(geometry: RadonGeometry) -> Self {
        Self::Radon(RadonOp::new(geometry))
    }

    /// Dense `m x (rows cols)` matrix acting on row-major flattened images.
    pub fn dense(matrix: Array2<f64>, rows: usize, cols: usize) -> Result<Self> {
        if matrix.ncols() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix has {} columns but images have {} pixels",
                matrix.ncols(),
                rows * cols
            )));
        }
        Ok(Self::Dense { rows, cols, matrix })
    }

    pub fn image_shape(&self) -> (usize, usize) {
        match self {
            Self::Identity { rows, cols } | Self::MaskedFourier { rows, cols, .. } | Self::Dense { rows, cols, .. } => {
                (*rows, *cols)
            }
            Self::Radon(r) => (r.geometry.rows, r.geometry.cols),
        }
    }

    pub fn measurement_len(&self) -> usize {
        match self {
            Self::Identity { rows, cols } => rows * cols,
            Self::MaskedFourier { rows, mask, .. } => 2 * rows * mask.selected_columns.len(),
            Self::Radon(r) => r.geometry.num_angles * r.geometry.num_detectors,
            Self::Dense { matrix, .. } => matrix.nrows(),
        }
    }

    fn check_image(&self, x: &Array2<f64>) -> Result<()> {
        if x.dim() != self.image_shape() {
            return Err(Error::Shape(format!("image is {:?}, operator expects {:?}", x.dim(), self.image_shape())));
        }
        Ok(())
    }

    fn check_measurements(&self, y: &Array1<f64>) -> Result<()> {
        if y.len() != self.measurement_len() {
            return Err(Error::Shape(format!(
                "measurement vector has {} entries, operator produces {}",
                y.len(),
                self.measurement_len()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        self.check_image(x)?;
        let flat: Vec<f64> = x.iter().cloned().collect();
        Ok(match self {
            Self::Identity { .. } => Array1::from(flat),
            Self::MaskedFourier { rows, cols, mask } => {
                let (h, w) = (*rows, *cols);
                let mut buf: Vec<Complex64> = flat.iter().map(|v| Complex64::new(*v, 0.0)).collect();
                fft2_dir(&mut buf, h, w, false);
                let s = 1.0 / ((h * w) as f64).sqrt();
                let mut out = Vec::with_capacity(self.measurement_len());
                for col in mask.dft_columns() {
                    for row in 0..h {
                        let v = buf[row * w + col] * s;
                        out.push(v.re);
                        out.push(v.im);
                    }
                }
                Array1::from(out)
            }
            Self::Radon(r) => r.forward(&flat),
            Self::Dense { matrix, .. } => matrix.dot(&Array1::from(flat)),
        })
    }

    pub fn adjoint(&self, y: &Array1<f64>) -> Result<Array2<f64>> {
        self.check_measurements(y)?;
        let (h, w) = self.image_shape();
        let flat: Vec<f64> = match self {
            Self::Identity { .. } => y.to_vec(),
            Self::MaskedFourier { mask, .. } => {
                let mut buf = vec![Complex64::new(0.0, 0.0); h * w];
                let mut it = y.iter();
                for col in mask.dft_columns() {
                    for row in 0..h {
                        let re = *it.next().unwrap();
                        let im = *it.next().unwrap();
                        buf[row * w + col] = Complex64::new(re, im);
                    }
                }
                fft2_dir(&mut buf, h, w, true);
                let s = 1.0 / ((h * w) as f64).sqrt();
                buf.iter().map(|v| v.re * s).collect()
            }
            Self::Radon(r) => r.backward(y),
            Self::Dense { matrix, .. } => matrix.t().dot(y).to_vec(),
        };
        Ok(Array2::from_shape_vec((h, w), flat).expect("shape checked"))
    }

    /// `H^T H x`.
    pub fn normal(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.adjoint(&self.apply(x)?)
    }

    /// `||H||` by 200 power iterations on `H^T H` from a fixed seed.
    pub fn norm_estimate(&self) -> f64 {
        self.norm_estimate_with(NORM_ITERS)
    }

    pub fn norm_estimate_with(&self, iters: usize) -> f64 {
        let shape = self.image_shape();
        linalg::power_iteration(|x| self.normal(x).expect("shape is consistent"), shape, iters, NORM_SEED).sqrt()
    }

    /// `apply(x) + noise_sigma * g` with `g` i.i.d. standard normal per
    /// measurement entry (real and imaginary parts independently).
    pub fn simulate(&self, x: &Array2<f64>, noise_sigma: f64, seed: u64) -> Result<Array1<f64>> {
        if !(noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise level must be >= 0, got {noise_sigma}")));
        }
        let mut y = self.apply(x)?;
        if noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in y.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v += noise_sigma * g;
            }
        }
        Ok(y)
    }
}
