//! Image-quality metrics for images with peak value 1.

use ndarray::{s, Array2, Zip};

use crate::error::{Error, Result};

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn check_shapes(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("images differ in shape: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

pub fn mse(reference: &Array2<f64>, candidate: &Array2<f64>) -> Result<f64> {
    check_shapes(reference, candidate)?;
    let sum = Zip::from(reference).and(candidate).fold(0.0, |acc, a, b| acc + (a - b) * (a - b));
    Ok(sum / reference.len() as f64)
}

/// `10 log10(1 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(reference: &Array2<f64>, candidate: &Array2<f64>) -> Result<f64> {
    let m = mse(reference, candidate)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

/// Normalized 11x11 Gaussian window with standard deviation 1.5.
pub fn gaussian_window() -> Array2<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w = Array2::from_shape_fn((SSIM_WINDOW, SSIM_WINDOW), |(i, j)| {
        let (y, x) = (i as f64 - r, j as f64 - r);
        (-(x * x + y * y) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let total = w.sum();
    w /= total;
    w
}

/// Gaussian-window weighted average over every fully contained window.
fn filter_valid(img: &Array2<f64>, win: &Array2<f64>) -> Array2<f64> {
    let (h, w) = img.dim();
    let k = win.nrows();
    let mut out = Array2::zeros((h + 1 - k, w + 1 - k));
    for ((a, b), &wt) in win.indexed_iter() {
        out.scaled_add(wt, &img.slice(s![a..a + h + 1 - k, b..b + w + 1 - k]));
    }
    out
}

/// Mean SSIM over all valid 11x11 Gaussian windows.
pub fn ssim(reference: &Array2<f64>, candidate: &Array2<f64>) -> Result<f64> {
    check_shapes(reference, candidate)?;
    let (h, w) = reference.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!("SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")));
    }
    let win = gaussian_window();
    let mu_x = filter_valid(reference, &win);
    let mu_y = filter_valid(candidate, &win);
    let xx = filter_valid(&(reference * reference), &win);
    let yy = filter_valid(&(candidate * candidate), &win);
    let xy = filter_valid(&(reference * candidate), &win);
    let mut total = 0.0;
    Zip::from(&mu_x).and(&mu_y).and(&xx).and(&yy).and(&xy).for_each(|&mx, &my, &sxx, &syy, &sxy| {
        let vx = sxx - mx * mx;
        let vy = syy - my * my;
        let cov = sxy - mx * my;
        total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
    });
    Ok(total / mu_x.len() as f64)
}
