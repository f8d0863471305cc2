mod common;

use common::{dense_matrix, gaussian, random_model, rng, tiny_hyper, uniform};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use wcrr::convstack::NormMethod;
use wcrr::forward::{make_cartesian_mask, MeasurementOp, RadonGeometry};
use wcrr::linalg::norm;
use wcrr::metrics::psnr;
use wcrr::regularizer::{Hyperparams, Params, WcrrModel};
use wcrr::solvers::{objective, prox_denoise, sagd_lipschitz, sagd_solve, SolveOptions};
use wcrr::spline::knots;

const SIGMA: f64 = 0.1;

/// Model whose activation is `(mu - 1) t` on the whole grid, with `alpha = 1`
/// at `SIGMA`: inside the grid `R(x) = (mu - 1) / 2 ||W x||^2`.
fn quadratic_model(mu: f64) -> WcrrModel {
    let hyper = Hyperparams { widths: vec![2, 3], kernel_size: 3, intervals: 20, delta: 0.2, ..Hyperparams::default() };
    let mut params = Params::init(&hyper, mu, (SIGMA + hyper.epsilon).ln(), 4).unwrap();
    params.c_plus = knots(hyper.delta, hyper.intervals);
    WcrrModel::new(hyper, params, NormMethod::PowerMethod { h: 8, w: 8, iters: 500 }).unwrap()
}

fn w_dense(model: &WcrrModel, h: usize, w: usize) -> DMatrix<f64> {
    let c = model.channels();
    dense_matrix(h, w, c * h * w, |e| model.features(e).iter().copied().collect())
}

fn to_vec(x: &Array2<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().copied())
}

fn tight() -> SolveOptions {
    SolveOptions { tol: 1e-13, max_iters: 50_000, ..SolveOptions::default() }
}

fn assert_inside_grid(model: &WcrrModel, x: &Array2<f64>) {
    let t_max = model.phi().t_max();
    assert!(model.features(x).iter().all(|v| (model.alpha(0, SIGMA) * v).abs() < t_max));
}

#[test]
fn quadratic_prox_matches_linear_solve() {
    let model = quadratic_model(3.0);
    let y = uniform(8, 8, &mut rng(1));
    let (x, rep) = prox_denoise(&model, &y, SIGMA, &tight()).unwrap();
    assert!(rep.final_grad_norm < 1e-10);
    assert_inside_grid(&model, &x);
    let w = w_dense(&model, 8, 8);
    let a = DMatrix::identity(64, 64) + w.tr_mul(&w) * 2.0;
    let oracle = a.lu().solve(&to_vec(&y)).unwrap();
    let err = (to_vec(&x) - &oracle).norm() / oracle.norm();
    assert!(err <= 1e-6, "rel error {err}");
}

#[test]
fn quadratic_sagd_matches_normal_equations() {
    let model = quadratic_model(2.5);
    let mut r = rng(2);
    let hm = gaussian(20, 16, &mut r) * 0.3;
    let op = MeasurementOp::dense(hm.clone(), 4, 4).unwrap();
    let truth = uniform(4, 4, &mut r);
    let y = op.simulate(&truth, 0.01, 3).unwrap();
    let lambda = 0.7;
    let (x, _) = sagd_solve(&op, &y, lambda, &model, SIGMA, &Array2::zeros((4, 4)), &tight()).unwrap();
    assert_inside_grid(&model, &x);
    let h = DMatrix::from_row_slice(20, 16, hm.as_slice().unwrap());
    let w = w_dense(&model, 4, 4);
    let a = h.tr_mul(&h) + w.tr_mul(&w) * (lambda * 1.5);
    let b = h.tr_mul(&DVector::from_vec(y.to_vec()));
    let oracle = a.lu().solve(&b).unwrap();
    let err = (to_vec(&x) - &oracle).norm() / oracle.norm();
    assert!(err <= 1e-6, "rel error {err}");
}

#[test]
fn convex_regime_agrees_with_gradient_descent() {
    // lambda <= 1 with a 1-weakly convex R keeps the denoising objective convex
    let model = random_model(&tiny_hyper(), 2.0, 2.0, 5, 16)
        .renormalized(NormMethod::PowerMethod { h: 12, w: 12, iters: 1000 })
        .unwrap();
    let op = MeasurementOp::identity(12, 12);
    let truth = uniform(12, 12, &mut rng(3));
    let y = op.simulate(&truth, 0.1, 4).unwrap();
    let lambda = 0.8;
    let (x, _) = sagd_solve(&op, &y, lambda, &model, SIGMA, &Array2::zeros((12, 12)), &tight()).unwrap();

    let step = 1.0 / sagd_lipschitz(1.0, lambda, &model);
    let mut g = Array2::zeros((12, 12));
    for _ in 0..200_000 {
        let grad = op.adjoint(&(op.apply(&g).unwrap() - &y)).unwrap() + &(model.grad(&g, SIGMA) * lambda);
        if norm(&grad) < 1e-13 {
            break;
        }
        g = g - grad * step;
    }
    let err = norm(&(&x - &g)) / norm(&g);
    assert!(err <= 1e-6, "rel difference {err}");
}

fn desk_problems() -> Vec<(&'static str, MeasurementOp)> {
    vec![
        ("ct", MeasurementOp::radon(RadonGeometry { rows: 32, cols: 32, num_angles: 30, num_detectors: 47, detector_spacing: 1.0 })),
        ("mri", MeasurementOp::masked_fourier(32, make_cartesian_mask(32, 4.0, 0.08, 0).unwrap())),
    ]
}

#[test]
fn objective_trace_is_monotone_and_gradient_vanishes() {
    let model = random_model(&tiny_hyper(), 3.0, 1.0, 6, 32)
        .renormalized(NormMethod::PowerMethod { h: 32, w: 32, iters: 500 })
        .unwrap();
    for (name, op) in desk_problems() {
        let truth = wcrr::data::shepp_logan(32);
        let y = op.simulate(&truth, 0.02, 1).unwrap();
        let opts = SolveOptions { tol: 1e-7, max_iters: 20_000, ..SolveOptions::default() };
        let (x, rep) = sagd_solve(&op, &y, 0.05, &model, SIGMA, &Array2::zeros((32, 32)), &opts).unwrap();
        for w in rep.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{name}: objective rose from {} to {}", w[0], w[1]);
        }
        let relative = rep.final_grad_norm / rep.initial_grad_norm;
        assert!(relative <= 1e-3, "{name}: relative gradient {relative}");
        let final_value = objective(&op, &y, 0.05, &model, SIGMA, &x).unwrap();
        assert!(final_value <= rep.objective_trace[0]);
    }
}

#[test]
fn prox_is_lipschitz_at_half_weak_convexity() {
    let model = random_model(&tiny_hyper(), 1.0, 3.0, 7, 16)
        .renormalized(NormMethod::PowerMethod { h: 10, w: 10, iters: 1000 })
        .unwrap()
        .with_rho_cap(0.5)
        .unwrap();
    let mut r = rng(8);
    let opts = SolveOptions { tol: 1e-10, max_iters: 20_000, ..SolveOptions::default() };
    for _ in 0..100 {
        let y1 = uniform(10, 10, &mut r);
        let y2 = &y1 + &(gaussian(10, 10, &mut r) * 0.05);
        let (x1, _) = prox_denoise(&model, &y1, SIGMA, &opts).unwrap();
        let (x2, _) = prox_denoise(&model, &y2, SIGMA, &opts).unwrap();
        let ratio = norm(&(&x1 - &x2)) / norm(&(&y1 - &y2));
        assert!(ratio <= 2.0 + 1e-6, "ratio {ratio}");
    }
}

#[test]
fn denoising_objective_is_midpoint_convex() {
    let model = random_model(&tiny_hyper(), 0.5, 3.0, 9, 16)
        .renormalized(NormMethod::PowerMethod { h: 10, w: 10, iters: 1000 })
        .unwrap();
    let op = MeasurementOp::identity(10, 10);
    let mut r = rng(10);
    let y: Array1<f64> = op.apply(&uniform(10, 10, &mut r)).unwrap();
    let f = |x: &Array2<f64>| objective(&op, &y, 1.0, &model, SIGMA, x).unwrap();
    for _ in 0..100 {
        let a = uniform(10, 10, &mut r);
        let b = uniform(10, 10, &mut r);
        let mid = (&a + &b) * 0.5;
        let (fa, fb, fm) = (f(&a), f(&b), f(&mid));
        assert!(fm <= 0.5 * (fa + fb) + 1e-9 * (1.0 + fm.abs()), "{fm} > {}", 0.5 * (fa + fb));
    }
}

#[test]
fn zero_noise_level_returns_the_input() {
    let model = random_model(&tiny_hyper(), 2.0, 1.0, 11, 16);
    let y = uniform(16, 16, &mut rng(12));
    let (x, _) = prox_denoise(&model, &y, 0.0, &SolveOptions::default()).unwrap();
    assert!(psnr(&y, &x).unwrap() >= 60.0);
}

#[test]
fn invalid_arguments_are_rejected() {
    let model = random_model(&tiny_hyper(), 1.0, 1.0, 1, 16);
    let y = uniform(8, 8, &mut rng(1));
    assert!(prox_denoise(&model, &y, model.sigma_max() * 1.01, &SolveOptions::default()).is_err());
    assert!(prox_denoise(&model, &y, 0.1, &SolveOptions { a: 1.0, ..SolveOptions::default() }).is_err());
    let op = MeasurementOp::identity(8, 8);
    let yv = op.apply(&y).unwrap();
    assert!(sagd_solve(&op, &yv, 0.0, &model, 0.1, &y, &SolveOptions::default()).is_err());
    assert!(sagd_solve(&op, &yv, 1.0, &model, 0.1, &Array2::zeros((4, 4)), &SolveOptions::default()).is_err());
}
