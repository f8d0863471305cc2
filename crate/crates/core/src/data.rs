//! Training patches and synthetic test images.
//!
//! Besides tiling PGM directories, the module generates dead-leaves images
//! (occluding random disks, with the scale-invariant statistics of natural
//! images) and ellipse phantoms for the reconstruction experiments.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageio;

/// Square clean patches with values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PatchDataset {
    patches: Vec<Array2<f64>>,
    patch_size: usize,
    source: String,
}

impl PatchDataset {
    pub fn new(patches: Vec<Array2<f64>>, source: impl Into<String>) -> Result<Self> {
        let Some(first) = patches.first() else {
            return Err(Error::InvalidArgument("dataset has no patches".into()));
        };
        let patch_size = first.nrows();
        for p in &patches {
            if p.dim() != (patch_size, patch_size) {
                return Err(Error::Shape(format!("patch of shape {:?} in a {patch_size}x{patch_size} dataset", p.dim())));
            }
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument("patch values must lie in [0, 1]".into()));
            }
        }
        Ok(Self { patches, patch_size, source: source.into() })
    }

    pub fn from_images(images: &[Array2<f64>], patch_size: usize, stride: usize, source: impl Into<String>) -> Result<Self> {
        let patches = images.iter().flat_map(|img| extract_patches(img, patch_size, stride)).collect();
        Self::new(patches, source)
    }

    /// Tiles every `.pgm` file of a directory (sorted by name).
    pub fn from_pgm_dir(dir: &Path, patch_size: usize, stride: usize) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
            .collect();
        paths.sort();
        let images = paths.iter().map(|p| imageio::read_pgm(p)).collect::<Result<Vec<_>>>()?;
        Self::from_images(&images, patch_size, stride, format!("pgm directory {}", dir.display()))
    }

    /// Patches tiled from `num_images` dead-leaves images.
    pub fn dead_leaves(num_images: usize, image_size: usize, patch_size: usize, stride: usize, seed: u64) -> Result<Self> {
        let images: Vec<_> = (0..num_images).map(|i| dead_leaves(image_size, seed.wrapping_add(i as u64))).collect();
        Self::from_images(&images, patch_size, stride, format!("dead leaves, {num_images} images of {image_size}px, seed {seed}"))
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn patches(&self) -> &[Array2<f64>] {
        &self.patches
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// All `size x size` windows at multiples of `stride`.
pub fn extract_patches(img: &Array2<f64>, size: usize, stride: usize) -> Vec<Array2<f64>> {
    let (h, w) = img.dim();
    let stride = stride.max(1);
    if size == 0 || h < size || w < size {
        return Vec::new();
    }
    let mut out = Vec::new();
    for r in (0..=h - size).step_by(stride) {
        for c in (0..=w - size).step_by(stride) {
            out.push(img.slice(s![r..r + size, c..c + size]).to_owned());
        }
    }
    out
}

/// Dead-leaves image: disks with power-law radii (density `r^-3`) and uniform
/// gray levels, stacked until the plane is covered. Rendered at twice the
/// resolution and box-filtered for anti-aliasing.
pub fn dead_leaves(size: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * size;
    let (r_min, r_max): (f64, f64) = (4.0, n as f64 / 3.0);
    let mut canvas = Array2::<f64>::from_elem((n, n), -1.0);
    let mut uncovered = n * n;
    let mut disks = 0;
    while uncovered > 0 && disks < 100_000 {
        disks += 1;
        let u: f64 = rng.random();
        let r = (r_min.powi(-2) - u * (r_min.powi(-2) - r_max.powi(-2))).powf(-0.5);
        let cx = rng.random_range(-r..n as f64 + r);
        let cy = rng.random_range(-r..n as f64 + r);
        let gray = rng.random_range(0.05..0.95);
        let (y0, y1) = ((cy - r).floor().max(0.0) as usize, ((cy + r).ceil().max(0.0) as usize).min(n));
        let (x0, x1) = ((cx - r).floor().max(0.0) as usize, ((cx + r).ceil().max(0.0) as usize).min(n));
        // later disks lie underneath earlier ones
        for y in y0..y1 {
            for x in x0..x1 {
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                if canvas[[y, x]] < 0.0 && dx * dx + dy * dy <= r * r {
                    canvas[[y, x]] = gray;
                    uncovered -= 1;
                }
            }
        }
    }
    canvas.mapv_inplace(|v| v.max(0.0));
    Array2::from_shape_fn((size, size), |(y, x)| {
        0.25 * (canvas[[2 * y, 2 * x]] + canvas[[2 * y + 1, 2 * x]] + canvas[[2 * y, 2 * x + 1]] + canvas[[2 * y + 1, 2 * x + 1]])
    })
}

/// An ellipse `(intensity, semi-axis a, semi-axis b, x0, y0, angle in degrees)`
/// in the `[-1, 1]^2` frame.
pub type Ellipse = (f64, f64, f64, f64, f64, f64);

/// Modified Shepp–Logan head phantom (high-contrast variant), values in `[0, 1]`.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Rasterizes ellipses at pixel centers; `x` grows with the column and `y`
/// with decreasing row. The sum is clamped to `[0, 1]`.
pub fn render_ellipses(size: usize, ellipses: &[Ellipse]) -> Array2<f64> {
    Array2::from_shape_fn((size, size), |(r, c)| {
        let x = (2.0 * c as f64 + 1.0) / size as f64 - 1.0;
        let y = 1.0 - (2.0 * r as f64 + 1.0) / size as f64;
        let v: f64 = ellipses
            .iter()
            .filter(|(_, a, b, x0, y0, deg)| {
                let (sin, cos) = (deg * PI / 180.0).sin_cos();
                let (dx, dy) = (x - x0, y - y0);
                let u = dx * cos + dy * sin;
                let w = -dx * sin + dy * cos;
                (u / a).powi(2) + (w / b).powi(2) <= 1.0
            })
            .map(|e| e.0)
            .sum();
        v.clamp(0.0, 1.0)
    })
}

pub fn shepp_logan(size: usize) -> Array2<f64> {
    render_ellipses(size, &SHEPP_LOGAN)
}

/// A random head-like phantom: a bright rim, a darker interior and
/// `num_features` random inner ellipses.
pub fn random_phantom(size: usize, num_features: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.random_range(0.6..0.75);
    let b = rng.random_range(0.8..0.92);
    let interior = rng.random_range(0.15..0.35);
    let mut ellipses = vec![(1.0, a, b, 0.0, 0.0, 0.0), (interior - 1.0, a - 0.03, b - 0.03, 0.0, 0.0, 0.0)];
    for _ in 0..num_features {
        let ea = rng.random_range(0.03..0.25);
        let eb = rng.random_range(0.03..0.25);
        let x0 = rng.random_range(-0.45..0.45);
        let y0 = rng.random_range(-0.6..0.6);
        let angle = rng.random_range(-90.0..90.0);
        let level = rng.random_range(-0.15..0.5);
        ellipses.push((level, ea, eb, x0, y0, angle));
    }
    render_ellipses(size, &ellipses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_tiling_counts() {
        let img = Array2::from_shape_fn((10, 12), |(r, c)| (r * 12 + c) as f64 / 120.0);
        let p = extract_patches(&img, 4, 3);
        // rows 0,3,6 and cols 0,3,6
        assert_eq!(p.len(), 9);
        assert_eq!(p[4][[0, 0]], img[[3, 3]]);
        assert!(extract_patches(&img, 11, 1).is_empty());
    }

    #[test]
    fn dataset_validation() {
        assert!(PatchDataset::new(vec![], "none").is_err());
        assert!(PatchDataset::new(vec![Array2::from_elem((2, 2), 1.5)], "bad").is_err());
        assert!(PatchDataset::new(vec![Array2::zeros((2, 2)), Array2::zeros((3, 3))], "mixed").is_err());
    }

    #[test]
    fn dead_leaves_is_deterministic_and_in_range() {
        let a = dead_leaves(32, 7);
        assert_eq!(a, dead_leaves(32, 7));
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        let mean = a.mean().unwrap();
        let var = a.mapv(|v| (v - mean).powi(2)).mean().unwrap();
        assert!(var > 1e-3);
    }

    #[test]
    fn shepp_logan_levels() {
        let p = shepp_logan(64);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(p[[0, 0]], 0.0);
        // the rim is the brightest structure
        assert!((p.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
        assert!((p[[32, 32]] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn random_phantoms_differ_by_seed() {
        assert_ne!(random_phantom(32, 5, 1), random_phantom(32, 5, 2));
        assert_eq!(random_phantom(32, 5, 1), random_phantom(32, 5, 1));
    }
}
