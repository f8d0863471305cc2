//! Linear splines on a uniform, zero-centered knot grid.
//!
//! A spline with `M` knot intervals and spacing `delta` has knots
//! `tau_m = (m - M/2) * delta` for `m = 0..=M`. It interpolates its coefficients
//! linearly between knots and is extended by constants outside `[tau_0, tau_M]`.
//! The constraint machinery (`project_monotone_nonexpansive`, `symmetrize_odd`)
//! maps unconstrained coefficients onto non-decreasing, 1-Lipschitz, odd splines,
//! together with the corresponding vector-Jacobian products used in training.

use std::io::{self, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSpline {
    delta: f64,
    coeffs: Vec<f64>,
    // primitive (anchored at 0) evaluated at every knot
    primitive: Vec<f64>,
}

impl LinearSpline {
    pub fn new(delta: f64, coeffs: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("spline spacing must be > 0, got {delta}")));
        }
        if coeffs.len() < 3 || (coeffs.len() - 1) % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "spline needs an even number of knot intervals, got {} coefficients",
                coeffs.len()
            )));
        }
        let primitive = knot_primitives(delta, &coeffs);
        Ok(Self { delta, coeffs, primitive })
    }

    pub fn zeros(delta: f64, intervals: usize) -> Result<Self> {
        Self::new(delta, vec![0.0; intervals + 1])
    }

    /// Spline whose coefficients equal the knot positions, i.e. the identity on the grid.
    pub fn identity_ramp(delta: f64, intervals: usize) -> Result<Self> {
        Self::new(delta, knots(delta, intervals))
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Number of knot intervals `M`.
    pub fn intervals(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn knot(&self, m: usize) -> f64 {
        knot(self.delta, self.intervals(), m)
    }

    pub fn knots(&self) -> Vec<f64> {
        knots(self.delta, self.intervals())
    }

    pub fn t_min(&self) -> f64 {
        self.knot(0)
    }

    pub fn t_max(&self) -> f64 {
        self.knot(self.intervals())
    }

    /// Slope on each knot interval, `(c_{m+1} - c_m) / delta`.
    pub fn slopes(&self) -> Vec<f64> {
        self.coeffs.windows(2).map(|w| (w[1] - w[0]) / self.delta).collect()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let m = self.intervals();
        match locate(self.delta, m, t) {
            Cell::Below => self.coeffs[0],
            Cell::Above => self.coeffs[m],
            Cell::Inside(k, frac) => {
                self.coeffs[k] + frac * (self.coeffs[k + 1] - self.coeffs[k])
            }
        }
    }

    /// Right-continuous derivative; zero outside the grid.
    pub fn eval_derivative(&self, t: f64) -> f64 {
        let m = self.intervals();
        match locate(self.delta, m, t) {
            Cell::Below | Cell::Above => 0.0,
            Cell::Inside(k, _) => (self.coeffs[k + 1] - self.coeffs[k]) / self.delta,
        }
    }

    /// The primitive anchored at `psi(0) = 0`: piecewise quadratic on the grid,
    /// affine outside it.
    pub fn eval_antiderivative(&self, t: f64) -> f64 {
        let m = self.intervals();
        let c = &self.coeffs;
        match locate(self.delta, m, t) {
            Cell::Inside(k, frac) => {
                self.primitive[k] + self.delta * frac * (c[k] + 0.5 * frac * (c[k + 1] - c[k]))
            }
            Cell::Above => self.primitive[m] + c[m] * (t - self.t_max()),
            Cell::Below => self.primitive[0] + c[0] * (t - self.t_min()),
        }
    }

    /// Writes `(tau_m, c_m)` rows as CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "knot,value")?;
        for (m, c) in self.coeffs.iter().enumerate() {
            writeln!(out, "{},{}", self.knot(m), c)?;
        }
        Ok(())
    }
}

fn knot_primitives(delta: f64, coeffs: &[f64]) -> Vec<f64> {
    let m = coeffs.len() - 1;
    let center = m / 2;
    let mut p = vec![0.0; m + 1];
    for k in center..m {
        p[k + 1] = p[k] + 0.5 * delta * (coeffs[k] + coeffs[k + 1]);
    }
    for k in (0..center).rev() {
        p[k] = p[k + 1] - 0.5 * delta * (coeffs[k] + coeffs[k + 1]);
    }
    p
}

pub fn knot(delta: f64, intervals: usize, m: usize) -> f64 {
    (m as f64 - (intervals / 2) as f64) * delta
}

pub fn knots(delta: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|m| knot(delta, intervals, m)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cell {
    Below,
    Above,
    /// Interval index and fractional position in `[0, 1)`.
    Inside(usize, f64),
}

fn locate(delta: f64, intervals: usize, t: f64) -> Cell {
    let pos = t / delta + (intervals / 2) as f64;
    if pos < 0.0 || pos.is_nan() {
        return Cell::Below;
    }
    if pos >= intervals as f64 {
        return Cell::Above;
    }
    let k = (pos.floor() as usize).min(intervals - 1);
    Cell::Inside(k, pos - k as f64)
}

/// Weights of the piecewise-linear hat basis at `t`: the spline value is
/// `sum_k w_k c_k`. Returns at most two `(index, weight)` pairs.
pub fn basis_weights(delta: f64, intervals: usize, t: f64) -> [(usize, f64); 2] {
    match locate(delta, intervals, t) {
        Cell::Below => [(0, 1.0), (0, 0.0)],
        Cell::Above => [(intervals, 1.0), (intervals, 0.0)],
        Cell::Inside(k, frac) => [(k, 1.0 - frac), (k + 1, frac)],
    }
}

/// Relative slack under which a finite difference counts as feasible. Knot
/// ramps built as `(m - M/2) * delta` have differences off by an ulp.
const FEASIBILITY_SLACK: f64 = 1e-12;

fn clip_differences(coeffs: &[f64], delta: f64) -> (Vec<f64>, Vec<bool>) {
    let tol = FEASIBILITY_SLACK * delta;
    let mut clipped = Vec::with_capacity(coeffs.len().saturating_sub(1));
    let mut active = Vec::with_capacity(coeffs.len().saturating_sub(1));
    for w in coeffs.windows(2) {
        let d = w[1] - w[0];
        if d < -tol {
            clipped.push(0.0);
            active.push(false);
        } else if d > delta + tol {
            clipped.push(delta);
            active.push(false);
        } else {
            clipped.push(d);
            active.push(true);
        }
    }
    (clipped, active)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Projects coefficients onto the set of non-decreasing, non-expansive splines:
/// finite differences are clipped to `[0, delta]`, re-accumulated, and shifted
/// so that the mean of the coefficients is preserved.
pub fn project_monotone_nonexpansive(coeffs: &[f64], delta: f64) -> Vec<f64> {
    if coeffs.is_empty() {
        return Vec::new();
    }
    let (clipped, _) = clip_differences(coeffs, delta);
    if clipped.iter().zip(coeffs.windows(2)).all(|(c, w)| *c == w[1] - w[0]) {
        return coeffs.to_vec();
    }
    let mut out = Vec::with_capacity(coeffs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for d in &clipped {
        acc += d;
        out.push(acc);
    }
    let shift = mean(coeffs) - mean(&out);
    out.iter_mut().for_each(|v| *v += shift);
    out
}

/// Vector-Jacobian product of [`project_monotone_nonexpansive`]. The clip is
/// differentiated as the indicator of the unclipped set (boundaries included).
pub fn project_monotone_nonexpansive_vjp(coeffs: &[f64], delta: f64, upstream: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    assert_eq!(upstream.len(), n);
    let (_, active) = clip_differences(coeffs, delta);
    let g_mean = mean(upstream);
    // output = S e - mean(S e) + mean(c)
    let g_s: Vec<f64> = upstream.iter().map(|g| g - g_mean).collect();
    let mut grad = vec![g_mean; n];
    // e_j feeds s_k for every k > j
    let mut suffix = 0.0;
    for j in (0..n - 1).rev() {
        suffix += g_s[j + 1];
        if active[j] {
            grad[j + 1] += suffix;
            grad[j] -= suffix;
        }
    }
    grad
}

/// Odd part of a coefficient vector about the center knot: `(c - reverse(c)) / 2`.
pub fn odd_part(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    (0..n).map(|m| 0.5 * (coeffs[m] - coeffs[n - 1 - m])).collect()
}

/// Projects and then takes the odd part, yielding coefficients of an odd,
/// non-decreasing, non-expansive spline.
pub fn symmetrize_odd(coeffs: &[f64], delta: f64) -> Vec<f64> {
    odd_part(&project_monotone_nonexpansive(coeffs, delta))
}

/// Vector-Jacobian product of [`symmetrize_odd`].
pub fn symmetrize_odd_vjp(coeffs: &[f64], delta: f64, upstream: &[f64]) -> Vec<f64> {
    // odd_part is self-adjoint
    let g = odd_part(upstream);
    project_monotone_nonexpansive_vjp(coeffs, delta, &g)
}
