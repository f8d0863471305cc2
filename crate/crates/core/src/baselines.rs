//! Reference reconstructions used for comparison: zero-filled adjoint,
//! Tikhonov-regularized least squares and Tikhonov (gradient-energy) denoising.

use ndarray::{s, Array1, Array2};

use crate::error::Result;
use crate::forward::MeasurementOp;
use crate::linalg;

/// Forward differences `(d_v, d_h)` with zero flux across the image border.
pub fn gradient(x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (h, w) = x.dim();
    let mut dv = Array2::zeros((h, w));
    let mut dh = Array2::zeros((h, w));
    if h > 1 {
        let d = &x.slice(s![1.., ..]) - &x.slice(s![..h - 1, ..]);
        dv.slice_mut(s![..h - 1, ..]).assign(&d);
    }
    if w > 1 {
        let d = &x.slice(s![.., 1..]) - &x.slice(s![.., ..w - 1]);
        dh.slice_mut(s![.., ..w - 1]).assign(&d);
    }
    (dv, dh)
}

/// Adjoint of [`gradient`] (a negative divergence).
pub fn gradient_adjoint(dv: &Array2<f64>, dh: &Array2<f64>) -> Array2<f64> {
    let (h, w) = dv.dim();
    let mut out = Array2::zeros((h, w));
    if h > 1 {
        let top = dv.slice(s![..h - 1, ..]);
        out.slice_mut(s![1.., ..]).scaled_add(1.0, &top);
        out.slice_mut(s![..h - 1, ..]).scaled_add(-1.0, &top);
    }
    if w > 1 {
        let left = dh.slice(s![.., ..w - 1]);
        out.slice_mut(s![.., 1..]).scaled_add(1.0, &left);
        out.slice_mut(s![.., ..w - 1]).scaled_add(-1.0, &left);
    }
    out
}

/// `D^T D x`, the (Neumann) negative Laplacian.
pub fn laplacian(x: &Array2<f64>) -> Array2<f64> {
    let (dv, dh) = gradient(x);
    gradient_adjoint(&dv, &dh)
}

pub const CG_TOL: f64 = 1e-10;
pub const CG_MAX_ITERS: usize = 5000;

/// `argmin_x 1/2 ||x - y||^2 + lambda ||grad x||^2`.
pub fn tikhonov_denoise(y: &Array2<f64>, lambda: f64) -> Array2<f64> {
    linalg::conjugate_gradient(|x| x + &(laplacian(x) * (2.0 * lambda)), y, CG_TOL, CG_MAX_ITERS).solution
}

/// `argmin_x 1/2 ||H x - y||^2 + lambda ||grad x||^2`, by CG on the normal
/// equations.
pub fn tikhonov_reconstruct(op: &MeasurementOp, y: &Array1<f64>, lambda: f64) -> Result<Array2<f64>> {
    let rhs = op.adjoint(y)?;
    let apply = |x: &Array2<f64>| op.normal(x).expect("shape fixed by the operator") + &(laplacian(x) * (2.0 * lambda));
    Ok(linalg::conjugate_gradient(apply, &rhs, CG_TOL, CG_MAX_ITERS).solution)
}

/// `argmin_x 1/2 ||H x - y||^2 + lambda / 2 ||x||^2`, by CG on the normal
/// equations.
pub fn ridge_reconstruct(op: &MeasurementOp, y: &Array1<f64>, lambda: f64) -> Result<Array2<f64>> {
    let rhs = op.adjoint(y)?;
    let apply = |x: &Array2<f64>| op.normal(x).expect("shape fixed by the operator") + &(x * lambda);
    Ok(linalg::conjugate_gradient(apply, &rhs, CG_TOL, CG_MAX_ITERS).solution)
}

/// Zero-filled reconstruction `H^T y`.
pub fn zero_filled(op: &MeasurementOp, y: &Array1<f64>) -> Result<Array2<f64>> {
    op.adjoint(y)
}

/// Logarithmic grid of `n` values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
