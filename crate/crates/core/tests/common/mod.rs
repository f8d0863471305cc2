//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use wcrr::convstack::NormMethod;
use wcrr::regularizer::{Hyperparams, Params, WcrrModel};

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn rel_arr(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
    num / den
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>())
}

pub fn tiny_hyper() -> Hyperparams {
    Hyperparams { widths: vec![2, 3, 4], kernel_size: 3, intervals: 20, delta: 0.01, ..Hyperparams::default() }
}

/// Random model with its norm from the DFT estimate on `grid x grid`.
pub fn random_model(hyper: &Hyperparams, mu: f64, alpha_center: f64, seed: u64, grid: usize) -> WcrrModel {
    let params = Params::random(hyper, mu, alpha_center, seed).unwrap();
    WcrrModel::new(hyper.clone(), params, NormMethod::DftEstimate { h: grid, w: grid }).unwrap()
}

/// Multi-layer cross-correlation by direct summation. `circular` selects
/// periodic instead of zero boundary handling.
pub fn conv_oracle(kernels: &[Array4<f64>], image: &Array2<f64>, circular: bool) -> Array3<f64> {
    let (h, w) = image.dim();
    let mut cur = image.clone().insert_axis(ndarray::Axis(0));
    for k in kernels {
        let (co, ci, ks, _) = k.dim();
        let r = (ks / 2) as isize;
        let mut next = Array3::zeros((co, h, w));
        for o in 0..co {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for i in 0..ci {
                        for a in 0..ks {
                            for b in 0..ks {
                                let (sy, sx) = (y as isize + a as isize - r, x as isize + b as isize - r);
                                let (sy, sx) = if circular {
                                    (sy.rem_euclid(h as isize), sx.rem_euclid(w as isize))
                                } else if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                } else {
                                    (sy, sx)
                                };
                                acc += k[[o, i, a, b]] * cur[[i, sy as usize, sx as usize]];
                            }
                        }
                    }
                    next[[o, y, x]] = acc;
                }
            }
        }
        cur = next;
    }
    cur
}

/// Dense matrix of a linear map on `h x w` images, built column by column
/// from unit impulses.
pub fn dense_matrix<F>(h: usize, w: usize, rows: usize, apply: F) -> DMatrix<f64>
where
    F: Fn(&Array2<f64>) -> Vec<f64>,
{
    let mut m = DMatrix::zeros(rows, h * w);
    for j in 0..h * w {
        let mut e = Array2::zeros((h, w));
        e[[j / w, j % w]] = 1.0;
        let col = apply(&e);
        assert_eq!(col.len(), rows);
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

pub fn largest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

/// Square root of the dominant eigenvalue of `A^T A` by `iters` dense power
/// steps from `start`, ending with the larger of the last two Rayleigh
/// quotients.
pub fn dense_power_norm(a: &DMatrix<f64>, start: &Array2<f64>, iters: usize) -> f64 {
    let ata = a.tr_mul(a);
    let mut v = DVector::from_iterator(start.len(), start.iter().copied());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = &ata * &v;
        lambda = v.dot(&w);
        v = &w / w.norm();
    }
    lambda.max(v.dot(&(&ata * &v))).sqrt()
}

/// Largest eigenvalue of `A^T A` by Lanczos with full reorthogonalization.
pub fn lanczos_top(a: &DMatrix<f64>, steps: usize) -> f64 {
    let n = a.ncols();
    let mut r = rng(99);
    let mut q = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = vec![q];
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    for k in 0..steps.min(n) {
        let qk = &basis[k];
        let mut v = a.tr_mul(&(a * qk));
        let alpha = qk.dot(&v);
        alphas.push(alpha);
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let beta = v.norm();
        if beta < 1e-12 * alpha.abs().max(1.0) {
            break;
        }
        betas.push(beta);
        basis.push(v / beta);
    }
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    SymmetricEigen::new(t).eigenvalues.max()
}

/// SSIM by explicit per-window loops (11x11 Gaussian window, std 1.5).
pub fn ssim_scalar(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let (h, w) = a.dim();
    let k = 11usize;
    let mut win = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let mut sum = 0.0;
    let mut count = 0;
    for y in 0..=h - k {
        for x in 0..=w - k {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let g = win[i][j] / total;
                    ma += g * a[[y + i, x + j]];
                    mb += g * b[[y + i, x + j]];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let g = win[i][j] / total;
                    let (da, db) = (a[[y + i, x + j]] - ma, b[[y + i, x + j]] - mb);
                    va += g * da * da;
                    vb += g * db * db;
                    cov += g * da * db;
                }
            }
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}
