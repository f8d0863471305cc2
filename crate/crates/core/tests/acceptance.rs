//! The ten acceptance criteria, run in sequence so that their runtimes can be
//! measured. Each prints one PASS/FAIL line; the test fails if any criterion
//! does.

mod common;

use std::path::Path;
use std::time::Instant;

use common::{
    conv_oracle, dense_matrix, dense_power_norm, gaussian, largest_singular_value, rel, rng, tiny_hyper, uniform,
};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use wcrr::baselines::{log_grid, tikhonov_denoise};
use wcrr::cli::problem::Problem;
use wcrr::cli::{checkpoint, run, schema, RunConfig};
use wcrr::convstack::{ConvStack, NormMethod, POWER_SEED};
use wcrr::data::{dead_leaves, extract_patches, PatchDataset};
use wcrr::forward::{make_cartesian_mask, MeasurementOp, RadonGeometry};
use wcrr::linalg::{dot, gaussian_image, norm};
use wcrr::metrics::psnr;
use wcrr::regularizer::{Hyperparams, Params, WcrrModel};
use wcrr::solvers::{objective, prox_denoise, sagd_lipschitz, sagd_solve, SolveOptions};
use wcrr::spline::{knots, project_monotone_nonexpansive, symmetrize_odd};
use wcrr::training::{batch_loss, export_model, loss_and_grad, sample_batch, train, TrainConfig, TrainOutcome};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget_secs: f64,
    pass: bool,
    secs: f64,
    detail: String,
}

fn line(c: &Criterion) -> String {
    format!(
        "criterion {:>2} {:<34} {} ({:.1}s of {:.0}s) {}",
        c.id,
        c.name,
        if c.pass { "PASS" } else { "FAIL" },
        c.secs,
        c.budget_secs,
        c.detail
    )
}

fn check(id: usize, name: &'static str, budget_secs: f64, f: impl FnOnce() -> Outcome) -> Criterion {
    let t = Instant::now();
    let o = f();
    let secs = t.elapsed().as_secs_f64();
    let c = Criterion { id, name, budget_secs, pass: o.pass && secs < budget_secs, secs, detail: o.detail };
    println!("{}", line(&c));
    c
}

fn desk_hyper() -> Hyperparams {
    TrainConfig::desk().hyper
}

// 1. smallest Hessian eigenvalue at random images

fn weak_convexity(desk: &WcrrModel) -> Outcome {
    let hyper = desk_hyper();
    let mut models: Vec<WcrrModel> = (0..3)
        .map(|seed| {
            let params = Params::random(&hyper, 0.5 + seed as f64, 1.0 + seed as f64, 40 + seed).unwrap();
            export_model(&hyper, &params, 64, 1000).unwrap()
        })
        .collect();
    models.push(desk.clone());
    let mut r = rng(1);
    let mut worst = f64::INFINITY;
    for (m, model) in models.iter().enumerate() {
        for k in 0..50u64 {
            let x = uniform(32, 32, &mut r) + gaussian(32, 32, &mut r) * 0.1;
            let sigma = r.random::<f64>() * model.sigma_max();
            worst = worst.min(model.min_hessian_eigenvalue(&x, sigma, 300, 100 * m as u64 + k));
        }
    }
    outcome(worst >= -1.0 - 1e-5, format!("min eigenvalue {worst:.8} over 4 models x 50 images"))
}

// 2. finite differences of energy and gradient

fn derivatives() -> Outcome {
    let h = 1e-6;
    let (mut g_err, mut h_err) = (0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let params = Params::random(&tiny_hyper(), 0.5 + 0.2 * seed as f64, 1.0, seed).unwrap();
        let model = WcrrModel::new(tiny_hyper(), params, NormMethod::DftEstimate { h: 16, w: 16 }).unwrap();
        let mut r = rng(100 + seed);
        let x = uniform(10, 10, &mut r);
        let v = gaussian(10, 10, &mut r);
        let sigma = 0.1;
        let (xp, xm) = (&x + &(&v * h), &x - &(&v * h));
        let fd = (model.energy(&xp, sigma) - model.energy(&xm, sigma)) / (2.0 * h);
        g_err = g_err.max(rel(fd, dot(&model.grad(&x, sigma), &v)));
        let hv = model.hvp(&x, &v, sigma);
        let fd = (model.grad(&xp, sigma) - model.grad(&xm, sigma)) / (2.0 * h);
        h_err = h_err.max(norm(&(&fd - &hv)) / norm(&hv));
    }
    outcome(g_err <= 1e-5 && h_err <= 1e-4, format!("gradient rel {g_err:.2e}, hvp rel {h_err:.2e}"))
}

// 3. spline constraint projections

fn projections() -> Outcome {
    let mut r = rng(3);
    let tol = 1e-12;
    let mut worst = 0.0f64;
    let mut feasible = true;
    for _ in 0..1000 {
        let half = r.random_range(1..30);
        let delta = r.random_range(1e-3..1.0);
        let c: Vec<f64> = (0..2 * half + 1).map(|_| r.random_range(-3.0..3.0)).collect();
        let p = project_monotone_nonexpansive(&c, delta);
        let pp = project_monotone_nonexpansive(&p, delta);
        let idem = p.iter().zip(&pp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let s = symmetrize_odd(&c, delta);
        let n = s.len();
        let odd = (0..n).map(|m| (s[m] + s[n - 1 - m]).abs()).fold(0.0, f64::max);
        for v in [&p, &s] {
            feasible &= v.windows(2).all(|w| w[1] - w[0] >= -tol && w[1] - w[0] <= delta + tol);
        }
        worst = worst.max(idem).max((mean(&p) - mean(&c)).abs()).max(odd);
    }
    outcome(feasible && worst <= tol, format!("max violation {worst:.1e}, feasible {feasible}"))
}

// 4. spectral norms against dense oracles

fn spectral_norms() -> Outcome {
    let s = ConvStack::random(&[2, 3, 4], 3, 17).unwrap();
    let c = s.out_channels();
    let m16 = dense_matrix(16, 16, c * 256, |e| conv_oracle(s.kernels(), e, true).iter().copied().collect());
    let dft = rel(s.spectral_norm_dft(16, 16).unwrap(), largest_singular_value(&m16));
    let m12 = dense_matrix(12, 12, c * 144, |e| conv_oracle(s.kernels(), e, false).iter().copied().collect());
    let oracle = dense_power_norm(&m12, &gaussian_image(12, 12, POWER_SEED), 1000);
    let power = rel(s.spectral_norm_power(12, 12, 1000), oracle);
    let big = ConvStack::random(&[4, 8, 8], 3, 5).unwrap();
    let p = big.spectral_norm_power(64, 64, 1000);
    let gap = (p - big.spectral_norm_dft(64, 64).unwrap()).abs() / p;
    outcome(
        dft <= 1e-8 && power <= 1e-8 && gap <= 0.05,
        format!("dft rel {dft:.1e}, power rel {power:.1e}, 64x64 gap {:.2}%", 100.0 * gap),
    )
}

// 5. proximal denoiser contract

fn prox_contract() -> Outcome {
    let sigma = 0.1;
    // activation 2t on the grid with alpha = 1: R = ||W x||^2 inside the grid
    let hyper = Hyperparams { widths: vec![2, 3], kernel_size: 3, intervals: 20, delta: 0.2, ..Hyperparams::default() };
    let mut params = Params::init(&hyper, 3.0, (sigma + hyper.epsilon).ln(), 4).unwrap();
    params.c_plus = knots(hyper.delta, hyper.intervals);
    let quad = WcrrModel::new(hyper, params, NormMethod::PowerMethod { h: 8, w: 8, iters: 500 }).unwrap();
    let y = uniform(8, 8, &mut rng(1));
    let tight = SolveOptions { tol: 1e-13, max_iters: 50_000, ..SolveOptions::default() };
    let (x, _) = prox_denoise(&quad, &y, sigma, &tight).unwrap();
    let w = dense_matrix(8, 8, quad.channels() * 64, |e| quad.features(e).iter().copied().collect());
    let a = DMatrix::identity(64, 64) + w.tr_mul(&w) * 2.0;
    let oracle = a.lu().solve(&DVector::from_iterator(64, y.iter().copied())).unwrap();
    let quad_err = (DVector::from_iterator(64, x.iter().copied()) - &oracle).norm() / oracle.norm();

    let model = export_model(&tiny_hyper(), &Params::random(&tiny_hyper(), 1.0, 3.0, 7).unwrap(), 16, 1000).unwrap();
    let half = model.with_rho_cap(0.5).unwrap();
    let mut r = rng(8);
    let opts = SolveOptions { tol: 1e-10, max_iters: 20_000, ..SolveOptions::default() };
    let mut lip = 0.0f64;
    for _ in 0..100 {
        let y1 = uniform(10, 10, &mut r);
        let y2 = &y1 + &(gaussian(10, 10, &mut r) * 0.05);
        let (x1, _) = prox_denoise(&half, &y1, sigma, &opts).unwrap();
        let (x2, _) = prox_denoise(&half, &y2, sigma, &opts).unwrap();
        lip = lip.max(norm(&(&x1 - &x2)) / norm(&(&y1 - &y2)));
    }

    let op = MeasurementOp::identity(10, 10);
    let yv = op.apply(&uniform(10, 10, &mut r)).unwrap();
    let f = |x: &Array2<f64>| objective(&op, &yv, 1.0, &model, sigma, x).unwrap();
    let mut convex = true;
    for _ in 0..100 {
        let (a, b) = (uniform(10, 10, &mut r), uniform(10, 10, &mut r));
        let fm = f(&((&a + &b) * 0.5));
        convex &= fm <= 0.5 * (f(&a) + f(&b)) + 1e-9 * (1.0 + fm.abs());
    }
    outcome(
        quad_err <= 1e-6 && lip <= 2.0 + 1e-6 && convex,
        format!("quadratic rel {quad_err:.1e}, Lipschitz {lip:.4} (bound 2), midpoint convex {convex}"),
    )
}

// 6. safeguarded AGD

fn desk_ops() -> Vec<(&'static str, MeasurementOp, f64, f64)> {
    vec![
        ("ct", MeasurementOp::radon(RadonGeometry::desk()), 10.0, 0.047),
        ("mri", MeasurementOp::masked_fourier(64, make_cartesian_mask(64, 4.0, 0.08, 0).unwrap()), 3e-3, 0.04),
    ]
}

fn safeguarded_agd(desk: &WcrrModel) -> Outcome {
    let truth = wcrr::data::shepp_logan(64);
    let mut monotone = true;
    let mut details = Vec::new();
    let mut grads_ok = true;
    for (name, op, lambda, sigma) in desk_ops() {
        let noise = if name == "ct" { 0.25 } else { 1e-2 };
        let y = op.simulate(&truth, noise, 0).unwrap();
        let opts = SolveOptions { tol: 1e-5, max_iters: 5000, ..SolveOptions::default() };
        let (_, rep) = sagd_solve(&op, &y, lambda, desk, sigma, &Array2::zeros((64, 64)), &opts).unwrap();
        monotone &= rep.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs());
        let relative = rep.final_grad_norm / rep.initial_grad_norm;
        grads_ok &= relative <= 1e-3;
        details.push(format!("{name} rel grad {relative:.1e} in {} its", rep.iterations));
    }

    // lambda < 1 keeps the denoising objective convex
    let op = MeasurementOp::identity(16, 16);
    let y = op.simulate(&uniform(16, 16, &mut rng(3)), 0.1, 4).unwrap();
    let lambda = 0.8;
    let tight = SolveOptions { tol: 1e-13, max_iters: 50_000, ..SolveOptions::default() };
    let (x, rep) = sagd_solve(&op, &y, lambda, desk, 0.08, &Array2::zeros((16, 16)), &tight).unwrap();
    monotone &= rep.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs());
    let step = 1.0 / sagd_lipschitz(1.0, lambda, desk);
    let mut g = Array2::zeros((16, 16));
    for _ in 0..200_000 {
        let grad = op.adjoint(&(op.apply(&g).unwrap() - &y)).unwrap() + &(desk.grad(&g, 0.08) * lambda);
        if norm(&grad) < 1e-13 {
            break;
        }
        g = g - grad * step;
    }
    let gd = norm(&(&x - &g)) / norm(&g);
    details.push(format!("vs GD rel {gd:.1e}"));
    outcome(monotone && grads_ok && gd <= 1e-6, format!("monotone {monotone}, {}", details.join(", ")))
}

// 7. implicit differentiation against finite differences of the batch loss

fn implicit_gradients() -> Outcome {
    let config = TrainConfig {
        hyper: Hyperparams { widths: vec![2, 3, 4], kernel_size: 3, ..Hyperparams::default() },
        forward_tol: 1e-10,
        forward_max_iters: 20_000,
        backward_tol: 1e-10,
        norm_grid: 32,
        ..TrainConfig::desk()
    };
    let ds = PatchDataset::dead_leaves(1, 32, 16, 16, 5).unwrap();
    let mut batch = sample_batch(&ds, 1, config.hyper.sigma_max, &mut rng(3));
    batch[0].sigma = 0.08;
    let params = Params::random(&config.hyper, 1.3, -2.0, 11).unwrap();
    let bg = loss_and_grad(&params, &batch, &config).unwrap();
    let h = 1e-5;
    let fd = |f: &dyn Fn(&mut Params, f64)| {
        let (mut p, mut m) = (params.clone(), params.clone());
        f(&mut p, h);
        f(&mut m, -h);
        (batch_loss(&p, &batch, &config).unwrap() - batch_loss(&m, &batch, &config).unwrap()) / (2.0 * h)
    };
    let mut checks: Vec<(String, f64, f64)> = vec![("mu".into(), fd(&|p, d| p.mu += d), bg.grads.mu)];

    // the five spline coefficients and two alpha coefficients with the largest
    // analytic gradients (most others are exactly zero at this sigma)
    let mut spline: Vec<(bool, usize, f64)> = (0..params.c_plus.len())
        .flat_map(|j| [(true, j, bg.grads.c_plus[j]), (false, j, bg.grads.c_minus[j])])
        .collect();
    spline.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));
    for &(plus, j, an) in spline.iter().take(5) {
        let v = if plus { fd(&|p, d| p.c_plus[j] += d) } else { fd(&|p, d| p.c_minus[j] += d) };
        checks.push((format!("c{}[{j}]", if plus { "+" } else { "-" }), v, an));
    }
    for (l, idx) in [(0, [1, 0, 0, 1]), (0, [0, 0, 2, 2]), (1, [2, 1, 2, 0]), (2, [3, 2, 1, 1]), (2, [0, 1, 0, 2])] {
        checks.push((format!("k{l}{idx:?}"), fd(&|p, d| p.kernels[l][idx] += d), bg.grads.kernels[l][idx]));
    }
    let mut alpha: Vec<((usize, usize), f64)> = bg.grads.alpha.indexed_iter().map(|(i, v)| (i, *v)).collect();
    alpha.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    for &((i, j), an) in alpha.iter().take(2) {
        checks.push((format!("alpha[{i},{j}]"), fd(&|p, d| p.alpha[[i, j]] += d), an));
    }
    let worst = checks.iter().map(|(_, f, a)| rel(*f, *a)).fold(0.0, f64::max);
    let nonzero = checks.iter().all(|(_, _, a)| *a != 0.0);
    outcome(worst <= 1e-2 && nonzero, format!("{} parameters, max rel error {worst:.1e}", checks.len()))
}

// 8. desk training

struct Desk {
    outcome: TrainOutcome,
    patches: usize,
    secs: f64,
    config: TrainConfig,
    dataset: PatchDataset,
}

fn train_desk() -> Desk {
    let t = Instant::now();
    let dataset = PatchDataset::dead_leaves(42, 64, 16, 8, 1000).unwrap();
    let config = TrainConfig::desk();
    let outcome = train(&dataset, &config).unwrap();
    Desk { outcome, patches: dataset.len(), secs: t.elapsed().as_secs_f64(), config, dataset }
}

fn noisy_copy(x: &Array2<f64>, sigma: f64, r: &mut impl Rng) -> Array2<f64> {
    x.mapv(|v| {
        let g: f64 = StandardNormal.sample(r);
        v + sigma * g
    })
}

fn desk_training(desk: &Desk) -> Outcome {
    let config = &desk.config;
    let fixed = sample_batch(&desk.dataset, 256, config.hyper.sigma_max, &mut rng(999));
    let init = Params::init(&config.hyper, config.mu_init, config.alpha_init, config.seed).unwrap();
    let l0 = batch_loss(&init, &fixed, config).unwrap();
    let l1 = batch_loss(&desk.outcome.params, &fixed, config).unwrap();
    let reduction = 1.0 - l1 / l0;
    let log = &desk.outcome.log;
    let avg = |rows: &[wcrr::training::LogRow]| rows.iter().map(|r| r.mean_abs_error).sum::<f64>() / rows.len() as f64;
    let running = 1.0 - avg(&log[log.len() - 50..]) / avg(&log[..25]);

    let sigma = 25.0 / 255.0;
    let mut r = rng(77);
    let clean: Vec<Array2<f64>> = (0..8).flat_map(|i| extract_patches(&dead_leaves(64, 5000 + i), 32, 32)).collect();
    let noisy: Vec<Array2<f64>> = clean.iter().map(|x| noisy_copy(x, sigma, &mut r)).collect();
    let n = clean.len() as f64;
    let wcrr_psnr = clean
        .iter()
        .zip(&noisy)
        .map(|(x, y)| psnr(x, &prox_denoise(&desk.outcome.model, y, sigma, &SolveOptions::default()).unwrap().0).unwrap())
        .sum::<f64>()
        / n;
    let (lam, tik) = log_grid(1e-3, 1e1, 41)
        .into_iter()
        .map(|l| (l, clean.iter().zip(&noisy).map(|(x, y)| psnr(x, &tikhonov_denoise(y, l)).unwrap()).sum::<f64>() / n))
        .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let margin = wcrr_psnr - tik;
    outcome(
        desk.patches >= 2000 && reduction >= 0.30 && margin >= 0.5 && desk.secs < 1200.0,
        format!(
            "{} patches, trained in {:.0}s, loss -{:.1}% (running -{:.1}%), {wcrr_psnr:.2} dB vs Tikhonov {tik:.2} dB (lambda {lam:.3}), margin {margin:+.2} dB",
            desk.patches,
            desk.secs,
            100.0 * reduction,
            100.0 * running
        ),
    )
}

// 9. inverse problems with cmd_tune

fn flags(pairs: &[(&str, String)]) -> Vec<String> {
    pairs.iter().flat_map(|(k, v)| [format!("--{k}"), v.clone()]).collect()
}

fn inverse_problems(desk: &WcrrModel, dir: &Path) -> Outcome {
    let ckpt = dir.join("desk.wcrr");
    checkpoint::save(desk, &ckpt).unwrap();
    let ckpt = ckpt.to_str().unwrap().to_string();
    let validation = "phantom:1,phantom:2".to_string();
    let mut pass = true;
    let mut details = Vec::new();
    for problem in ["mri", "ct"] {
        let tune_dir = dir.join(format!("tune_{problem}"));
        let tuned = run(
            "tune",
            None,
            &flags(&[
                ("checkpoint", ckpt.clone()),
                ("problem", problem.into()),
                ("validation", validation.clone()),
                ("grid", "3".into()),
                ("rounds", "2".into()),
                ("max_iters", "500".into()),
                ("out_dir", tune_dir.to_str().unwrap().into()),
            ]),
        )
        .unwrap();
        let (lambda, sigma) = (tuned.get_f64("lambda").unwrap(), tuned.get_f64("sigma").unwrap());

        // baseline parameter tuned on the same validation images
        let overrides = vec![("problem".to_string(), problem.to_string())];
        let cfg = RunConfig::resolve(&schema("tune").unwrap(), None, &overrides).unwrap();
        let p = Problem::from_config(&cfg).unwrap();
        let pairs: Vec<(Array2<f64>, Array1<f64>)> = validation
            .split(',')
            .enumerate()
            .map(|(i, src)| {
                let x = wcrr::cli::problem::load_source(src, 64).unwrap();
                let y = p.measure(&x, i as u64).unwrap();
                (x, y)
            })
            .collect();
        let (base_lambda, _) = p.tune_baseline(&pairs, 1e-3, 1e3).unwrap();

        let rec = run(
            "reconstruct",
            None,
            &flags(&[
                ("checkpoint", ckpt.clone()),
                ("problem", problem.into()),
                ("ground_truth", "shepp_logan".into()),
                ("lambda", lambda.to_string()),
                ("sigma", sigma.to_string()),
                ("baseline_lambda", base_lambda.to_string()),
                ("out_dir", dir.join(format!("rec_{problem}")).to_str().unwrap().into()),
            ]),
        )
        .unwrap();
        let (ours, base) = (rec.get_f64("psnr").unwrap(), rec.get_f64("baseline_psnr").unwrap());
        pass &= ours - base >= 2.0;
        details.push(format!(
            "{problem}: {ours:.2} dB vs baseline {base:.2} dB ({:+.2} dB, lambda {lambda:.3e}, sigma {sigma:.4})",
            ours - base
        ));
    }
    outcome(pass, details.join("; "))
}

// 10. adjoints and masks

fn adjoints_and_masks() -> Outcome {
    let mut r = rng(5);
    let ops = vec![
        MeasurementOp::identity(12, 10),
        MeasurementOp::masked_fourier(64, make_cartesian_mask(64, 4.0, 0.08, 0).unwrap()),
        MeasurementOp::masked_fourier(15, make_cartesian_mask(15, 2.0, 0.2, 1).unwrap()),
        MeasurementOp::radon(RadonGeometry::desk()),
        MeasurementOp::dense(gaussian(20, 16, &mut r), 4, 4).unwrap(),
    ];
    let mut worst = 0.0f64;
    for op in &ops {
        let (h, w) = op.image_shape();
        for _ in 0..5 {
            let x = gaussian(h, w, &mut r);
            let y = Array1::from_iter(gaussian(1, op.measurement_len(), &mut r).into_iter());
            worst = worst.max(rel(op.apply(&x).unwrap().dot(&y), dot(&x, &op.adjoint(&y).unwrap())));
        }
    }
    let stack = ConvStack::random(&[4, 8, 8], 3, 2).unwrap();
    for _ in 0..5 {
        let x = gaussian(20, 20, &mut r);
        let z = stack.forward(&gaussian(20, 20, &mut r));
        let z = z.mapv(|_| StandardNormal.sample(&mut r));
        worst = worst.max(rel((stack.forward(&x) * &z).sum(), dot(&x, &stack.adjoint(&z))));
    }
    let mask = make_cartesian_mask(320, 4.0, 0.08, 0).unwrap();
    let center = mask.center_count();
    let total = mask.selected_columns.len();
    let start = mask.center_start();
    let contiguous = (start..start + center).all(|c| mask.contains(c));
    outcome(
        worst <= 1e-10 && center == 25 && total == 80 && contiguous,
        format!("max adjoint rel error {worst:.1e}, mask {center} center + {total} total columns"),
    )
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let mut results = vec![
        check(10, "adjoints and mask cardinalities", 5.0, adjoints_and_masks),
        check(3, "projection suite", 5.0, projections),
        check(2, "gradient and HVP correctness", 10.0, derivatives),
        check(4, "spectral-norm oracles", 30.0, spectral_norms),
        check(5, "proximal denoiser contract", 60.0, prox_contract),
        check(7, "implicit differentiation", 120.0, implicit_gradients),
    ];
    let mut trained = None;
    results.push(check(8, "desk training", 1200.0, || {
        let desk = train_desk();
        let o = desk_training(&desk);
        trained = Some(desk);
        o
    }));
    let desk = trained.unwrap();
    let model = &desk.outcome.model;
    results.push(check(1, "weak-convexity certificate", 60.0, || weak_convexity(model)));
    results.push(check(6, "safeguarded AGD", 120.0, || safeguarded_agd(model)));
    results.push(check(9, "inverse problems", 600.0, || inverse_problems(model, dir.path())));

    results.sort_by_key(|c| c.id);
    println!("\nacceptance summary");
    for c in &results {
        println!("{}", line(c));
    }
    let failed: Vec<usize> = results.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
