mod common;

use common::rng;
use ndarray::Array2;
use wcrr::convstack::NormMethod;
use wcrr::data::PatchDataset;
use wcrr::regularizer::{Hyperparams, Params, WcrrModel};
use wcrr::solvers::{prox_denoise, SolveOptions};
use wcrr::training::{export_model, round_up_f32, sample_batch, train, TrainConfig};

#[test]
fn noise_levels_are_uniform() {
    let ds = PatchDataset::dead_leaves(1, 16, 8, 8, 0).unwrap();
    let sigma_max = 0.2;
    let mut draws: Vec<f64> = sample_batch(&ds, 20_000, sigma_max, &mut rng(3)).into_iter().map(|s| s.sigma).collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let cdf = v / sigma_max;
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS statistic {ks}");
}

#[test]
fn batch_noise_matches_its_level() {
    let ds = PatchDataset::dead_leaves(2, 32, 16, 16, 1).unwrap();
    for s in sample_batch(&ds, 20, 0.1, &mut rng(4)) {
        let r = &s.noisy - &s.clean;
        let std = (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
        assert!((std - s.sigma).abs() <= 0.35 * s.sigma + 1e-12);
    }
}

#[test]
fn flat_activation_denoiser_is_the_identity() {
    let hyper = Hyperparams { widths: vec![2, 3], kernel_size: 3, ..Hyperparams::default() };
    let mut params = Params::init(&hyper, 0.0, 0.0, 1).unwrap();
    params.c_minus.iter_mut().for_each(|c| *c = 0.0);
    let model = WcrrModel::new(hyper, params, NormMethod::DftEstimate { h: 16, w: 16 }).unwrap();
    let y = common::uniform(12, 12, &mut rng(5));
    let (x, _) = prox_denoise(&model, &y, 0.05, &SolveOptions::default()).unwrap();
    assert_eq!(x, y);
}

#[test]
fn export_rounds_the_norm_up() {
    assert!(round_up_f32(0.1) >= 0.1);
    assert_eq!(round_up_f32(0.5), 0.5);
    let hyper = Hyperparams { widths: vec![2, 3], kernel_size: 3, ..Hyperparams::default() };
    let params = Params::random(&hyper, 1.0, 0.0, 3).unwrap();
    let model = export_model(&hyper, &params, 32, 500).unwrap();
    assert!(model.conv().operator_norm(32, 32, 500) <= 1.0);
    assert!(model.params().kernels.iter().all(|k| k.iter().all(|v| (*v as f32) as f64 == *v)));
}

#[test]
fn short_training_runs_are_deterministic() {
    let ds = PatchDataset::dead_leaves(2, 32, 16, 8, 2).unwrap();
    let config = TrainConfig {
        hyper: Hyperparams { widths: vec![2, 3, 4], kernel_size: 3, ..Hyperparams::default() },
        steps: 3,
        batch_size: 4,
        norm_grid: 32,
        export_grid: 32,
        export_iters: 200,
        ..TrainConfig::desk()
    };
    let a = train(&ds, &config).unwrap();
    let b = train(&ds, &config).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log.len(), 3);
    assert!(a.log.iter().all(|r| r.loss.is_finite() && r.used == 4));
    assert_ne!(a.params, Params::init(&config.hyper, config.mu_init, config.alpha_init, config.seed).unwrap());
    let bad = TrainConfig { lr_mu: -1.0, ..config };
    assert!(train(&ds, &bad).is_err());
    let empty: Vec<Array2<f64>> = Vec::new();
    assert!(PatchDataset::from_images(&empty, 8, 8, "none").map_or(true, |d| d.is_empty()));
}
