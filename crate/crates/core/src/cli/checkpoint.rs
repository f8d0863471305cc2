//! Binary model checkpoints.
//!
//! Layout (all integers `u32`, all reals `f32`, little-endian):
//!
//! ```text
//! "WCRR" version
//! kernel_size num_layers widths[num_layers]
//! M delta sigma_max epsilon
//! mu
//! n c_plus[n]
//! n c_minus[n]
//! rows cols alpha[rows * cols]
//! per layer: c_out c_in k k kernel[c_out * c_in * k * k]
//! norm grid_h grid_w power_iters
//! ```
//!
//! Values are stored in `f32`, so models exported by training (whose
//! parameters are already `f32`-representable) round-trip bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array4};

use crate::convstack::NormMethod;
use crate::error::{Error, Result};
use crate::regularizer::{Hyperparams, Params, WcrrModel};

pub const MAGIC: &[u8; 4] = b"WCRR";
pub const VERSION: u32 = 1;
/// Power iterations used to re-verify `||W|| <= 1` on load.
pub const VERIFY_ITERS: usize = 100;
pub const VERIFY_SLACK: f64 = 1e-6;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn f32(&mut self, v: f64) {
        self.buf.extend_from_slice(&(v as f32).to_le_bytes());
    }

    fn f32s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.f32(*v);
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Format(format!("checkpoint truncated at byte {}", self.pos)));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32(&mut self) -> Result<f64> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n > self.data.len() {
            return Err(Error::Format(format!("implausible block length {n}")));
        }
        (0..n).map(|_| self.f32()).collect()
    }
}

pub fn to_bytes(model: &WcrrModel) -> Result<Vec<u8>> {
    let (grid_h, grid_w, iters) = match model.conv().method() {
        NormMethod::PowerMethod { h, w, iters } => (h, w, iters),
        other => {
            return Err(Error::InvalidArgument(format!("checkpoints need a power-method norm, model has {other:?}")));
        }
    };
    let hyper = model.hyper();
    let p = model.params();
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    w.u32(hyper.kernel_size);
    w.u32(hyper.widths.len());
    hyper.widths.iter().for_each(|c| w.u32(*c));
    w.u32(hyper.intervals);
    w.f32(hyper.delta);
    w.f32(hyper.sigma_max);
    w.f32(hyper.epsilon);
    w.f32(p.mu);
    for c in [&p.c_plus, &p.c_minus] {
        w.u32(c.len());
        w.f32s(c.iter());
    }
    w.u32(p.alpha.nrows());
    w.u32(p.alpha.ncols());
    w.f32s(p.alpha.iter());
    for k in &p.kernels {
        let (a, b, c, d) = k.dim();
        [a, b, c, d].iter().for_each(|v| w.u32(*v));
        w.f32s(k.iter());
    }
    w.f32(model.conv().norm());
    w.u32(grid_h);
    w.u32(grid_w);
    w.u32(iters);
    Ok(w.buf)
}

/// Decodes a checkpoint without the norm check.
pub fn from_bytes(data: &[u8]) -> Result<WcrrModel> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a WCRR checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let kernel_size = r.u32()?;
    let layers = r.u32()?;
    if layers == 0 || layers > 64 {
        return Err(Error::Format(format!("implausible layer count {layers}")));
    }
    let widths = (0..layers).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let intervals = r.u32()?;
    let hyper = Hyperparams { widths, kernel_size, intervals, delta: r.f32()?, sigma_max: r.f32()?, epsilon: r.f32()? };
    hyper.validate()?;
    let mu = r.f32()?;
    let n = r.u32()?;
    let c_plus = r.f32s(n)?;
    let n = r.u32()?;
    let c_minus = r.f32s(n)?;
    let (rows, cols) = (r.u32()?, r.u32()?);
    let alpha = Array2::from_shape_vec((rows, cols), r.f32s(rows * cols)?).expect("length matches");
    let mut kernels = Vec::with_capacity(layers);
    for _ in 0..layers {
        let (a, b, c, d) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
        let data = r.f32s(a * b * c * d)?;
        kernels.push(Array4::from_shape_vec((a, b, c, d), data).expect("length matches"));
    }
    let norm = r.f32()?;
    let (h, w, iters) = (r.u32()?, r.u32()?, r.u32()?);
    if r.pos != data.len() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", data.len() - r.pos)));
    }
    let params = Params { kernels, mu, c_plus, c_minus, alpha };
    WcrrModel::with_norm(hyper, params, norm, NormMethod::PowerMethod { h, w, iters })
}

/// Power check that the stored norm makes `||W|| <= 1 + 1e-6` on the grid it
/// was computed on.
pub fn verify_norm(model: &WcrrModel) -> Result<f64> {
    let (h, w) = match model.conv().method() {
        NormMethod::PowerMethod { h, w, .. } | NormMethod::DftEstimate { h, w } => (h, w),
        NormMethod::Given => (64, 64),
    };
    let n = model.conv().operator_norm(h, w, VERIFY_ITERS);
    if n > 1.0 + VERIFY_SLACK {
        return Err(Error::Format(format!("stored norm is too small: ||W|| = {n:.9} on {h}x{w}")));
    }
    Ok(n)
}

pub fn save(model: &WcrrModel, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?.write_all(&bytes)?;
    Ok(())
}

/// Loads and re-verifies the operator norm.
pub fn load(path: &Path) -> Result<WcrrModel> {
    let mut data = Vec::new();
    std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?.read_to_end(&mut data)?;
    let model = from_bytes(&data).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })?;
    verify_norm(&model)?;
    Ok(model)
}
