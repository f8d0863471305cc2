//! Multi-noise-level training of the regularizer through its proximal denoiser.
//!
//! Each batch element is denoised to convergence, and the gradient of the
//! `l1` loss is pulled back through the optimality condition
//! `x_hat - y + grad R(x_hat) = 0`: with `(I + H_R(x_hat)) w = sign(x_hat - x)`
//! solved by conjugate gradients, the parameter gradient is
//! `-d/dtheta <w, grad R(x_hat; theta)>`.

use std::io::{self, Write};

use log::warn;
use ndarray::{Array2, Array3, Array4, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::convstack::{ConvStack, NormMethod};
use crate::data::PatchDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::regularizer::{Hyperparams, Params, WcrrModel, ALPHA_INTERVALS};
use crate::solvers::{prox_denoise, SolveOptions, StopReason};
use crate::spline;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hyper: Hyperparams,
    pub patch_size: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub lr_mu: f64,
    pub lr_conv: f64,
    pub lr_alpha: f64,
    pub lr_splines: f64,
    /// Multiplicative decay applied every `decay_every` steps.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub forward_tol: f64,
    pub forward_max_iters: usize,
    pub backward_tol: f64,
    pub backward_max_iters: usize,
    /// Scale of `phi_minus` inside the training loop (`< 1` keeps
    /// `I + H_R` invertible).
    pub rho_cap: f64,
    pub mu_init: f64,
    pub alpha_init: f64,
    /// Side of the DFT grid for the per-step norm estimate.
    pub norm_grid: usize,
    /// Image side and iteration count of the power method at export.
    pub export_grid: usize,
    pub export_iters: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Full-size setting: 4/8/60 channels, `k_s = 5`, batches of 128 40x40
    /// patches for 6000 steps.
    pub fn full_scale() -> Self {
        Self {
            hyper: Hyperparams::default(),
            patch_size: 40,
            batch_size: 128,
            steps: 6000,
            alpha_init: 5.0,
            ..Self::desk()
        }
    }

    /// Laptop-scale setting: 4/8/8 channels, `k_s = 3`, batches of 32 16x16
    /// patches for 500 steps.
    pub fn desk() -> Self {
        Self {
            hyper: Hyperparams { widths: vec![4, 8, 8], kernel_size: 3, ..Hyperparams::default() },
            patch_size: 16,
            batch_size: 32,
            steps: 500,
            lr_mu: 5e-2,
            lr_conv: 5e-3,
            lr_alpha: 5e-3,
            lr_splines: 5e-4,
            lr_decay: 0.75,
            decay_every: 500,
            forward_tol: 1e-4,
            forward_max_iters: 2000,
            backward_tol: 1e-6,
            backward_max_iters: 1000,
            rho_cap: 1.0 - 1e-3,
            mu_init: 1.0,
            alpha_init: DESK_ALPHA_INIT,
            norm_grid: 64,
            export_grid: 64,
            export_iters: 1000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        let rates = [self.lr_mu, self.lr_conv, self.lr_alpha, self.lr_splines];
        if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::Config("learning rates must be finite and non-negative".into()));
        }
        if !(self.forward_tol > 0.0 && self.backward_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.lr_decay > 0.0) || self.decay_every == 0 {
            return Err(Error::Config("lr_decay must be positive and decay_every non-zero".into()));
        }
        if self.batch_size == 0 || self.forward_max_iters == 0 || self.export_iters == 0 {
            return Err(Error::Config("batch size and iteration limits must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rho_cap) {
            return Err(Error::Config(format!("rho_cap must lie in [0, 1], got {}", self.rho_cap)));
        }
        if self.norm_grid < 2 * self.field_of_view() - 1 {
            return Err(Error::Config(format!("norm_grid must be at least {}", 2 * self.field_of_view() - 1)));
        }
        Ok(())
    }

    fn field_of_view(&self) -> usize {
        self.hyper.widths.len() * (self.hyper.kernel_size - 1) + 1
    }

    /// Learning rates `(mu, conv, alpha, splines)` in effect at `step` (1-based).
    pub fn learning_rates(&self, step: usize) -> [f64; 4] {
        let decay = self.lr_decay.powi((step.saturating_sub(1) / self.decay_every) as i32);
        [self.lr_mu * decay, self.lr_conv * decay, self.lr_alpha * decay, self.lr_splines * decay]
    }
}

/// Desk-scale initial value of the log noise-scaling splines.
pub const DESK_ALPHA_INIT: f64 = -1.0;

/// One training example.
#[derive(Debug, Clone)]
pub struct Sample {
    pub clean: Array2<f64>,
    pub noisy: Array2<f64>,
    pub sigma: f64,
}

/// Draws `batch_size` patches uniformly with replacement, each with its own
/// `sigma ~ U[0, sigma_max]` and `y = x + sigma n`.
pub fn sample_batch(dataset: &PatchDataset, batch_size: usize, sigma_max: f64, rng: &mut impl Rng) -> Vec<Sample> {
    (0..batch_size)
        .map(|_| {
            let clean = dataset.patches()[rng.random_range(0..dataset.len())].clone();
            let sigma = rng.random::<f64>() * sigma_max;
            let mut noisy = clean.clone();
            noisy.mapv_inplace(|v| {
                let g: f64 = StandardNormal.sample(rng);
                v + sigma * g
            });
            Sample { clean, noisy, sigma }
        })
        .collect()
}

/// Gradients with the same layout as [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub kernels: Vec<Array4<f64>>,
    pub mu: f64,
    pub c_plus: Vec<f64>,
    pub c_minus: Vec<f64>,
    pub alpha: Array2<f64>,
}

impl ParamGrads {
    pub fn zeros_like(p: &Params) -> Self {
        Self {
            kernels: p.kernels.iter().map(|k| Array4::zeros(k.raw_dim())).collect(),
            mu: 0.0,
            c_plus: vec![0.0; p.c_plus.len()],
            c_minus: vec![0.0; p.c_minus.len()],
            alpha: Array2::zeros(p.alpha.raw_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.kernels.iter_mut().zip(&other.kernels) {
            *a += b;
        }
        self.mu += other.mu;
        self.c_plus.iter_mut().zip(&other.c_plus).for_each(|(a, b)| *a += b);
        self.c_minus.iter_mut().zip(&other.c_minus).for_each(|(a, b)| *a += b);
        self.alpha += &other.alpha;
    }
}

/// The model used inside the training loop: DFT norm estimate on the
/// configured grid and `phi_minus` scaled by `rho_cap`.
pub fn training_model(params: &Params, config: &TrainConfig) -> Result<WcrrModel> {
    let method = NormMethod::DftEstimate { h: config.norm_grid, w: config.norm_grid };
    WcrrModel::new(config.hyper.clone(), params.clone(), method)?.with_rho_cap(config.rho_cap)
}

/// Gradient of `theta -> <u, grad_x R(x; theta)>` at fixed `x`, excluding the
/// dependence of `||U||` on the kernels, which is returned as the scalar
/// cotangent of the norm.
pub fn regularizer_vjp(model: &WcrrModel, x: &Array2<f64>, u: &Array2<f64>, sigma: f64) -> (ParamGrads, f64) {
    let hyper = model.hyper();
    let params = model.params();
    let stack = model.conv().stack();
    let n = model.conv().norm();
    let alphas = model.alphas(sigma);
    let phi = model.phi();

    let z = stack.forward(x) / n;
    let pbar = stack.forward(u) / n;
    let mut p = Array3::zeros(z.raw_dim());
    let mut zbar = Array3::zeros(z.raw_dim());
    let mut abar = vec![0.0; alphas.len()];
    let mut cphi_bar = vec![0.0; hyper.intervals + 1];
    for (i, &a) in alphas.iter().enumerate() {
        let inv = 1.0 / a;
        let zi = z.index_axis(Axis(0), i);
        let pbi = pbar.index_axis(Axis(0), i);
        let mut pi = p.index_axis_mut(Axis(0), i);
        let mut zbi = zbar.index_axis_mut(Axis(0), i);
        let mut acc = 0.0;
        Zip::from(&mut pi).and(&mut zbi).and(&zi).and(&pbi).for_each(|pv, zb, &zv, &pb| {
            let t = a * zv;
            let f = phi.eval(t);
            let df = phi.eval_derivative(t);
            *pv = f * inv;
            *zb = pb * df;
            acc += pb * (zv * df - f * inv) * inv;
            for (idx, w) in spline::basis_weights(hyper.delta, hyper.intervals, t) {
                cphi_bar[idx] += pb * w * inv;
            }
        });
        abar[i] = acc;
    }

    let mu_bar = if params.mu > 0.0 { cphi_bar.iter().zip(model.phi_plus_coeffs()).map(|(g, o)| g * o).sum() } else { 0.0 };
    let plus_up: Vec<f64> = cphi_bar.iter().map(|g| model.mu() * g).collect();
    let minus_up: Vec<f64> = cphi_bar.iter().map(|g| -model.rho_cap() * g).collect();
    let c_plus = spline::symmetrize_odd_vjp(&params.c_plus, hyper.delta, &plus_up);
    let c_minus = spline::symmetrize_odd_vjp(&params.c_minus, hyper.delta, &minus_up);

    let mut alpha = Array2::zeros(params.alpha.raw_dim());
    let s_pos = sigma - 0.5 * hyper.sigma_max;
    for (i, &a) in alphas.iter().enumerate() {
        for (j, w) in spline::basis_weights(hyper.alpha_delta(), ALPHA_INTERVALS, s_pos) {
            alpha[[i, j]] += abar[i] * a * w;
        }
    }

    let mut kernels = stack.kernel_vjp(x, &(&zbar / n));
    for (k, g) in kernels.iter_mut().zip(stack.kernel_vjp(u, &(&p / n))) {
        *k += &g;
    }
    let norm_bar = -(dot3(&zbar, &z) + dot3(&pbar, &p)) / n;
    (ParamGrads { kernels, mu: mu_bar, c_plus, c_minus, alpha }, norm_bar)
}

fn dot3(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y)
}

#[derive(Debug, Clone)]
pub struct BatchGrad {
    /// `sum_m ||x_hat_m - x_m||_1` over the elements that were used.
    pub loss: f64,
    pub grads: ParamGrads,
    pub used: usize,
    pub skipped: usize,
    /// `||U||` estimate used for the batch.
    pub norm: f64,
    pub forward_iters: usize,
    pub cg_iters: usize,
}

fn forward_options(config: &TrainConfig) -> SolveOptions {
    SolveOptions { tol: config.forward_tol, max_iters: config.forward_max_iters, track_objective: false, ..SolveOptions::default() }
}

/// `l1` loss of the denoiser on a batch (forward pass only).
pub fn batch_loss(params: &Params, batch: &[Sample], config: &TrainConfig) -> Result<f64> {
    let model = training_model(params, config)?;
    let opts = forward_options(config);
    let mut loss = 0.0;
    for s in batch {
        let (xhat, _) = prox_denoise(&model, &s.noisy, s.sigma, &opts)?;
        loss += Zip::from(&xhat).and(&s.clean).fold(0.0, |acc, a, b| acc + (a - b).abs());
    }
    Ok(loss)
}

struct ElementResult {
    loss: f64,
    grads: ParamGrads,
    norm_bar: f64,
    forward_iters: usize,
    cg_iters: usize,
}

fn element_grad(model: &WcrrModel, sample: &Sample, config: &TrainConfig) -> Result<Option<ElementResult>> {
    let (xhat, rep) = prox_denoise(model, &sample.noisy, sample.sigma, &forward_options(config))?;
    if rep.stop_reason == StopReason::MaxIters {
        warn!("skipping batch element: denoiser did not converge in {} iterations", rep.iterations);
        return Ok(None);
    }
    let diff = &xhat - &sample.clean;
    let loss = diff.iter().map(|v| v.abs()).sum();
    let v = diff.mapv(|d| if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 });
    let hess = model.hessian_at(&xhat, sample.sigma);
    let cg = linalg::conjugate_gradient(|w| w + &hess.apply(w), &v, config.backward_tol, config.backward_max_iters);
    if !cg.converged {
        warn!("skipping batch element: backward solve stalled at residual {:.3e}", cg.residual_norm);
        return Ok(None);
    }
    let (grads, norm_bar) = regularizer_vjp(model, &xhat, &(-&cg.solution), sample.sigma);
    Ok(Some(ElementResult { loss, grads, norm_bar, forward_iters: rep.iterations, cg_iters: cg.iterations }))
}

/// Batch loss and gradient with respect to the raw parameters, including the
/// dependence of the DFT norm estimate on the kernels.
pub fn loss_and_grad(params: &Params, batch: &[Sample], config: &TrainConfig) -> Result<BatchGrad> {
    let stack = ConvStack::new(params.kernels.clone())?;
    let (norm, norm_grad) = stack.spectral_norm_dft_with_grad(config.norm_grid, config.norm_grid)?;
    let method = NormMethod::DftEstimate { h: config.norm_grid, w: config.norm_grid };
    let model = WcrrModel::with_norm(config.hyper.clone(), params.clone(), norm, method)?.with_rho_cap(config.rho_cap)?;

    let results: Vec<Result<Option<ElementResult>>> = batch.par_iter().map(|s| element_grad(&model, s, config)).collect();
    let mut out = BatchGrad {
        loss: 0.0,
        grads: ParamGrads::zeros_like(params),
        used: 0,
        skipped: 0,
        norm,
        forward_iters: 0,
        cg_iters: 0,
    };
    let mut norm_bar = 0.0;
    for r in results {
        match r? {
            Some(e) => {
                out.loss += e.loss;
                out.grads.add_assign(&e.grads);
                norm_bar += e.norm_bar;
                out.used += 1;
                out.forward_iters += e.forward_iters;
                out.cg_iters += e.cg_iters;
            }
            None => out.skipped += 1,
        }
    }
    for (k, g) in out.grads.kernels.iter_mut().zip(&norm_grad) {
        k.scaled_add(norm_bar, g);
    }
    Ok(out)
}

/// Adam with per-group learning rates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: ParamGrads,
    v: ParamGrads,
}

impl Adam {
    pub fn new(params: &Params) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: ParamGrads::zeros_like(params), v: ParamGrads::zeros_like(params) }
    }

    /// One update with rates `(mu, conv, alpha, splines)`.
    pub fn update(&mut self, params: &mut Params, grads: &ParamGrads, rates: [f64; 4]) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        let [lr_mu, lr_conv, lr_alpha, lr_splines] = rates;
        update(&mut params.mu, grads.mu, &mut self.m.mu, &mut self.v.mu, lr_mu);
        for l in 0..params.kernels.len() {
            Zip::from(&mut params.kernels[l])
                .and(&grads.kernels[l])
                .and(&mut self.m.kernels[l])
                .and(&mut self.v.kernels[l])
                .for_each(|p, &g, m, v| update(p, g, m, v, lr_conv));
        }
        Zip::from(&mut params.alpha)
            .and(&grads.alpha)
            .and(&mut self.m.alpha)
            .and(&mut self.v.alpha)
            .for_each(|p, &g, m, v| update(p, g, m, v, lr_alpha));
        for (p, g, m, v) in [
            (&mut params.c_plus, &grads.c_plus, &mut self.m.c_plus, &mut self.v.c_plus),
            (&mut params.c_minus, &grads.c_minus, &mut self.m.c_minus, &mut self.v.c_minus),
        ] {
            for j in 0..p.len() {
                update(&mut p[j], g[j], &mut m[j], &mut v[j], lr_splines);
            }
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    /// Loss per pixel, averaged over the used elements.
    pub mean_abs_error: f64,
    pub used: usize,
    pub skipped: usize,
    pub rates: [f64; 4],
    pub norm: f64,
    pub mu: f64,
    pub forward_iters: usize,
    pub cg_iters: usize,
}

pub fn write_log_csv<W: Write>(mut out: W, rows: &[LogRow]) -> io::Result<()> {
    writeln!(out, "step,loss,mean_abs_error,used,skipped,lr_mu,lr_conv,lr_alpha,lr_splines,norm_u,mu,forward_iters,cg_iters")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.loss,
            r.mean_abs_error,
            r.used,
            r.skipped,
            r.rates[0],
            r.rates[1],
            r.rates[2],
            r.rates[3],
            r.norm,
            r.mu,
            r.forward_iters,
            r.cg_iters
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Exported model (firm norm, `rho_cap = 1`, parameters rounded to `f32`).
    pub model: WcrrModel,
    /// Raw parameters after the last step.
    pub params: Params,
    pub log: Vec<LogRow>,
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Rounds every parameter and hyperparameter to `f32` precision, so that the
/// checkpoint format stores the model exactly.
pub fn round_params(hyper: &Hyperparams, params: &Params) -> (Hyperparams, Params) {
    let hyper = Hyperparams {
        delta: round_f32(hyper.delta),
        sigma_max: round_f32(hyper.sigma_max),
        epsilon: round_f32(hyper.epsilon),
        ..hyper.clone()
    };
    let params = Params {
        kernels: params.kernels.iter().map(|k| k.mapv(round_f32)).collect(),
        mu: round_f32(params.mu),
        c_plus: params.c_plus.iter().cloned().map(round_f32).collect(),
        c_minus: params.c_minus.iter().cloned().map(round_f32).collect(),
        alpha: params.alpha.mapv(round_f32),
    };
    (hyper, params)
}

/// Smallest `f32` value not below `v`.
pub fn round_up_f32(v: f64) -> f64 {
    let f = v as f32;
    if (f as f64) >= v {
        f as f64
    } else {
        f32::from_bits(f.to_bits() + 1) as f64
    }
}

/// Evaluation model: `f32`-rounded parameters, `rho_cap = 1` and the firm
/// power-method norm on `grid x grid` images, rounded up to `f32`.
pub fn export_model(hyper: &Hyperparams, params: &Params, grid: usize, iters: usize) -> Result<WcrrModel> {
    let (hyper, params) = round_params(hyper, params);
    let stack = ConvStack::new(params.kernels.clone())?;
    let norm = round_up_f32(stack.spectral_norm_power(grid, grid, iters));
    WcrrModel::with_norm(hyper, params, norm, NormMethod::PowerMethod { h: grid, w: grid, iters })
}

pub fn train(dataset: &PatchDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, config, |_, _| Ok(()))
}

/// Training loop; `hook` runs after every step with the new log row and the
/// updated raw parameters (e.g. to write checkpoints).
pub fn train_with<F>(dataset: &PatchDataset, config: &TrainConfig, mut hook: F) -> Result<TrainOutcome>
where
    F: FnMut(&LogRow, &Params) -> Result<()>,
{
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    let mut params = Params::init(&config.hyper, config.mu_init, config.alpha_init, config.seed)?;
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let pixels = (dataset.patch_size() * dataset.patch_size()) as f64;
    let mut log = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let batch = sample_batch(dataset, config.batch_size, config.hyper.sigma_max, &mut rng);
        let bg = loss_and_grad(&params, &batch, config)?;
        if bg.skipped > 0 {
            warn!("step {step}: skipped {} of {} batch elements", bg.skipped, batch.len());
        }
        let rates = config.learning_rates(step);
        if bg.used > 0 {
            adam.update(&mut params, &bg.grads, rates);
        }
        let row = LogRow {
            step,
            loss: bg.loss,
            mean_abs_error: if bg.used > 0 { bg.loss / (bg.used as f64 * pixels) } else { f64::NAN },
            used: bg.used,
            skipped: bg.skipped,
            rates,
            norm: bg.norm,
            mu: params.mu,
            forward_iters: bg.forward_iters,
            cg_iters: bg.cg_iters,
        };
        hook(&row, &params)?;
        log.push(row);
    }
    let model = export_model(&config.hyper, &params, config.export_grid, config.export_iters)?;
    Ok(TrainOutcome { model, params, log })
}
