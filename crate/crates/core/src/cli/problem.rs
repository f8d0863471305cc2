//! Image sources and measurement setups described by run configurations.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::baselines;
use crate::data;
use crate::error::{Error, Result};
use crate::forward::{make_cartesian_mask, MeasurementOp, RadonGeometry, CT_NOISE_FULL_SCALE};
use crate::imageio;
use crate::metrics;

use super::config::{key, KeySpec, RunConfig};

/// Loads an image from a file, or synthesizes one: `shepp_logan`,
/// `phantom:<seed>` (random ellipses) or `dead_leaves:<seed>`.
pub fn load_source(spec: &str, size: usize) -> Result<Array2<f64>> {
    let spec = spec.trim();
    if spec == "shepp_logan" {
        return Ok(data::shepp_logan(size));
    }
    if let Some((kind, seed)) = spec.split_once(':') {
        if let Ok(seed) = seed.parse::<u64>() {
            match kind {
                "phantom" => return Ok(data::random_phantom(size, 8, seed)),
                "dead_leaves" => return Ok(data::dead_leaves(size, seed)),
                _ => {}
            }
        }
    }
    imageio::read_image(Path::new(spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Identity,
    Mri,
    Ct,
    Dense,
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "mri" => Ok(Self::Mri),
            "ct" => Ok(Self::Ct),
            "dense" => Ok(Self::Dense),
            _ => Err(Error::Config(format!("unknown problem {s:?} (expected identity, mri, ct or dense)"))),
        }
    }
}

/// Measurement-noise level used when `noise` is left empty. MRI noise is per
/// real/imaginary component under the unitary DFT. CT noise is per detector
/// reading, scaled from the 512x512 level by `size / 512` since line
/// integrals shrink with the image side.
pub fn default_noise(kind: ProblemKind, size: usize) -> f64 {
    match kind {
        ProblemKind::Identity => 25.0 / 255.0,
        ProblemKind::Mri => 1e-2,
        ProblemKind::Ct => CT_NOISE_FULL_SCALE * size as f64 / 512.0,
        ProblemKind::Dense => 1e-2,
    }
}

/// Search range of `lambda` used when the bounds are left empty. Radon data
/// terms scale with `||H||^2` (in the thousands at 64x64), so CT needs a
/// larger `lambda`.
pub fn default_lambda_range(kind: ProblemKind) -> (f64, f64) {
    match kind {
        ProblemKind::Ct => (1e-1, 1e3),
        ProblemKind::Identity | ProblemKind::Mri | ProblemKind::Dense => (1e-3, 1e1),
    }
}

/// Keys describing the forward operator and the simulated noise.
pub fn problem_keys() -> Vec<KeySpec> {
    vec![
        key("problem", "ct"),
        key("size", 64),
        key("noise", ""),
        key("noise_seed", 0),
        key("mask_acceleration", 4),
        key("mask_center_fraction", 0.08),
        key("mask_seed", 0),
        key("ct_angles", 60),
        key("ct_detectors", 95),
        key("ct_spacing", 1.0),
        key("dense_matrix", ""),
    ]
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub kind: ProblemKind,
    pub op: MeasurementOp,
    pub noise: f64,
    pub noise_seed: u64,
}

impl Problem {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let kind: ProblemKind = cfg.get("problem")?;
        let size: usize = cfg.get("size")?;
        if size == 0 {
            return Err(Error::Config("size must be positive".into()));
        }
        let op = match kind {
            ProblemKind::Identity => MeasurementOp::identity(size, size),
            ProblemKind::Mri => {
                let mask = make_cartesian_mask(
                    size,
                    cfg.get("mask_acceleration")?,
                    cfg.get("mask_center_fraction")?,
                    cfg.get("mask_seed")?,
                )?;
                MeasurementOp::masked_fourier(size, mask)
            }
            ProblemKind::Ct => MeasurementOp::radon(RadonGeometry {
                rows: size,
                cols: size,
                num_angles: cfg.get("ct_angles")?,
                num_detectors: cfg.get("ct_detectors")?,
                detector_spacing: cfg.get("ct_spacing")?,
            }),
            ProblemKind::Dense => {
                let path: String = cfg.get("dense_matrix")?;
                MeasurementOp::dense(read_matrix_csv(Path::new(&path))?, size, size)?
            }
        };
        let noise = cfg.opt("noise")?.unwrap_or_else(|| default_noise(kind, size));
        if !(noise >= 0.0) {
            return Err(Error::Config(format!("noise must be >= 0, got {noise}")));
        }
        Ok(Self { kind, op, noise, noise_seed: cfg.get("noise_seed")? })
    }

    /// Noisy measurements of `x`; the seed is offset by `index` so that each
    /// image of a set gets its own noise.
    pub fn measure(&self, x: &Array2<f64>, index: u64) -> Result<Array1<f64>> {
        self.op.simulate(x, self.noise, self.noise_seed.wrapping_add(index))
    }

    /// Reference reconstruction: the zero-filled adjoint for MRI, the noisy
    /// image itself for denoising, and `lambda`-ridge least squares otherwise.
    pub fn baseline(&self, y: &Array1<f64>, lambda: f64) -> Result<Array2<f64>> {
        match self.kind {
            ProblemKind::Mri | ProblemKind::Identity => baselines::zero_filled(&self.op, y),
            ProblemKind::Ct | ProblemKind::Dense => baselines::ridge_reconstruct(&self.op, y, lambda),
        }
    }

    /// Whether [`Problem::baseline`] depends on its `lambda`.
    pub fn baseline_is_tunable(&self) -> bool {
        matches!(self.kind, ProblemKind::Ct | ProblemKind::Dense)
    }

    /// Baseline `lambda` maximizing mean PSNR on `(truth, measurement)` pairs,
    /// searched over a 41-point logarithmic grid.
    pub fn tune_baseline(&self, pairs: &[(Array2<f64>, Array1<f64>)], lo: f64, hi: f64) -> Result<(f64, f64)> {
        let grid = if self.baseline_is_tunable() { baselines::log_grid(lo, hi, 41) } else { vec![lo] };
        let mut best = (lo, f64::NEG_INFINITY);
        for lambda in grid {
            let mut total = 0.0;
            for (x, y) in pairs {
                total += metrics::psnr(x, &self.baseline(y, lambda)?)?;
            }
            let mean = total / pairs.len() as f64;
            if mean > best.1 {
                best = (lambda, mean);
            }
        }
        Ok(best)
    }
}

/// Comma-separated matrix, one row per line.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1))))
            .collect::<Result<Vec<_>>>()?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(Error::Format(format!("{}:{}: ragged row", path.display(), n + 1)));
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::Format(e.to_string()))
}

/// One value per line.
pub fn read_vector_csv(path: &Path) -> Result<Array1<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| l.trim().parse().map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1))))
        .collect::<Result<Vec<f64>>>()
        .map(Array1::from)
}

pub fn write_vector_csv(path: &Path, v: &Array1<f64>) -> Result<()> {
    let text: String = v.iter().map(|x| format!("{x:e}\n")).collect();
    std::fs::write(path, text)?;
    Ok(())
}
