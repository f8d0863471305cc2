// Denoises a dead-leaves image with the learned proximal operator and
// compares against grid-tuned Tikhonov smoothing.
// Usage: denoise [checkpoint]; without a checkpoint the desk model is trained first.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wcrr::baselines::{log_grid, tikhonov_denoise};
use wcrr::cli::checkpoint;
use wcrr::data::{dead_leaves, PatchDataset};
use wcrr::metrics::{psnr, ssim};
use wcrr::regularizer::WcrrModel;
use wcrr::solvers::{prox_denoise, SolveOptions};
use wcrr::training::{train, TrainConfig};

fn model() -> wcrr::error::Result<WcrrModel> {
    match std::env::args().nth(1) {
        Some(path) => checkpoint::load(path.as_ref()),
        None => {
            let data = PatchDataset::dead_leaves(42, 64, 16, 8, 1000)?;
            Ok(train(&data, &TrainConfig::desk())?.model)
        }
    }
}

fn main() -> wcrr::error::Result<()> {
    let model = model()?;
    let sigma = 25.0 / 255.0;
    let clean = dead_leaves(96, 7);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noisy = clean.mapv(|v| v + noise.sample(&mut rng));

    let (x, report) = prox_denoise(&model, &noisy, sigma, &SolveOptions::default())?;
    let tik = log_grid(1e-3, 1e1, 41)
        .into_iter()
        .map(|l| tikhonov_denoise(&noisy, l))
        .max_by(|a, b| psnr(&clean, a).unwrap().total_cmp(&psnr(&clean, b).unwrap()))
        .unwrap();
    println!("noisy     {:.2} dB", psnr(&clean, &noisy)?);
    println!("tikhonov  {:.2} dB  ssim {:.3}", psnr(&clean, &tik)?, ssim(&clean, &tik)?);
    println!("wcrr      {:.2} dB  ssim {:.3}  ({} iterations)", psnr(&clean, &x)?, ssim(&clean, &x)?, report.iterations);
    Ok(())
}
