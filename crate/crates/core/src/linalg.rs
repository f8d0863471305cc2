//! Small matrix-free linear-algebra helpers on images.

use ndarray::{Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y)
}

pub fn norm(a: &Array2<f64>) -> f64 {
    dot(a, a).sqrt()
}

/// `||a - b|| / ||b||`; zero when both vanish, infinite when only `b` does.
pub fn relative_change(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let num = Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + (x - y) * (x - y)).sqrt();
    let den = norm(b);
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Standard-normal image from a ChaCha8 stream with the given seed.
pub fn gaussian_image(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
}

/// Power iteration for the largest eigenvalue of a symmetric positive
/// semi-definite operator. Starts from the seeded Gaussian image and returns the
/// final Rayleigh quotient (0 if the operator annihilates the iterate).
pub fn power_iteration<F>(op: F, shape: (usize, usize), iters: usize, seed: u64) -> f64
where
    F: Fn(&Array2<f64>) -> Array2<f64>,
{
    let mut v = gaussian_image(shape.0, shape.1, seed);
    let n = norm(&v);
    v /= n;
    let mut lambda = 0.0;
    for _ in 0..iters.max(1) {
        let w = op(&v);
        lambda = dot(&v, &w);
        let wn = norm(&w);
        if wn == 0.0 || !wn.is_finite() {
            return 0.0;
        }
        v = w / wn;
    }
    let w = op(&v);
    lambda.max(dot(&v, &w))
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Array2<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Conjugate gradients for `A x = b` with `A` symmetric positive definite.
/// Stops when `||r|| <= tol * ||b||`.
pub fn conjugate_gradient<F>(apply: F, b: &Array2<f64>, tol: f64, max_iters: usize) -> CgOutcome
where
    F: Fn(&Array2<f64>) -> Array2<f64>,
{
    let b_norm = norm(b);
    let mut x = Array2::zeros(b.raw_dim());
    if b_norm == 0.0 {
        return CgOutcome { solution: x, iterations: 0, residual_norm: 0.0, converged: true };
    }
    let target = tol * b_norm;
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iters && rr.sqrt() > target {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let step = rr / pap;
        x.scaled_add(step, &p);
        r.scaled_add(-step, &ap);
        let rr_new = dot(&r, &r);
        p *= rr_new / rr;
        p += &r;
        rr = rr_new;
        iterations += 1;
    }
    let residual_norm = rr.sqrt();
    CgOutcome { solution: x, iterations, residual_norm, converged: residual_norm <= target }
}
