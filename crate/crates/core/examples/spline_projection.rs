// Projects random spline coefficients onto the monotone, 1-Lipschitz set and
// evaluates the resulting activation and its antiderivative.
use wcrr::spline::{project_monotone_nonexpansive, symmetrize_odd, LinearSpline};

fn main() -> wcrr::error::Result<()> {
    let delta = 0.1;
    let raw = vec![0.3, -0.2, 0.5, 0.1, 0.9, 0.4, 1.4];
    let projected = project_monotone_nonexpansive(&raw, delta);
    let odd = symmetrize_odd(&raw, delta);
    println!("raw       {raw:?}");
    println!("projected {projected:?}");
    println!("odd       {odd:?}");

    let spline = LinearSpline::new(delta, odd)?;
    for t in [-0.5, -0.15, 0.0, 0.05, 0.2, 0.5] {
        println!("t={t:+.2} phi={:+.4} psi={:.5}", spline.eval(t), spline.eval_antiderivative(t));
    }
    Ok(())
}
