// Reconstructs a 64x64 Shepp-Logan phantom from 4x Cartesian-undersampled
// k-space and compares against the zero-filled inverse.
// Usage: mri_reconstruct [checkpoint] [lambda] [sigma]
use ndarray::Array2;
use wcrr::cli::checkpoint;
use wcrr::data::{shepp_logan, PatchDataset};
use wcrr::forward::{make_cartesian_mask, MeasurementOp};
use wcrr::metrics::psnr;
use wcrr::regularizer::WcrrModel;
use wcrr::solvers::{sagd_solve, SolveOptions};
use wcrr::training::{train, TrainConfig};

fn model(path: Option<String>) -> wcrr::error::Result<WcrrModel> {
    match path {
        Some(path) => checkpoint::load(path.as_ref()),
        None => {
            let data = PatchDataset::dead_leaves(42, 64, 16, 8, 1000)?;
            Ok(train(&data, &TrainConfig::desk())?.model)
        }
    }
}

fn main() -> wcrr::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let model = model(args.next())?;
    let lambda: f64 = args.next().map_or(3e-3, |s| s.parse().expect("lambda"));
    let sigma: f64 = args.next().map_or(0.04, |s| s.parse().expect("sigma"));

    let truth = shepp_logan(64);
    let op = MeasurementOp::masked_fourier(64, make_cartesian_mask(64, 4.0, 0.08, 0)?);
    let y = op.simulate(&truth, 1e-2, 0)?;
    let (x, report) = sagd_solve(&op, &y, lambda, &model, sigma, &Array2::zeros((64, 64)), &SolveOptions::default())?;
    let baseline = op.adjoint(&y)?;
    println!("zero-filled {:.2} dB", psnr(&truth, &baseline)?);
    println!("wcrr {:.2} dB after {} iterations ({} restarts)", psnr(&truth, &x)?, report.iterations, report.restart_count);
    Ok(())
}
