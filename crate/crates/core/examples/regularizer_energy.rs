// Builds a random constrained regularizer and reports its energy, gradient
// norm and the weak-convexity certificate on a phantom.
use wcrr::data::shepp_logan;
use wcrr::linalg::norm;
use wcrr::regularizer::Params;
use wcrr::training::{export_model, TrainConfig};

fn main() -> wcrr::error::Result<()> {
    let hyper = TrainConfig::desk().hyper;
    let model = export_model(&hyper, &Params::random(&hyper, 1.5, 1.0, 3)?, 64, 1000)?;
    let x = shepp_logan(32);
    for sigma in [0.02, 0.05, 0.1] {
        let (e, g) = model.energy_and_grad(&x, sigma);
        let lmin = model.min_hessian_eigenvalue(&x, sigma, 300, 1);
        println!("sigma {sigma:.2}: R = {e:.4}, |grad| = {:.4}, min eig {lmin:+.4}", norm(&g));
    }
    println!("weak convexity bound {:.4}, gradient Lipschitz bound {:.4}", model.weak_convexity_bound(), model.lipschitz_bound());
    Ok(())
}
