//! The weakly convex ridge regularizer
//!
//! ```text
//! R(x; sigma) = sum_i sum_k alpha_i(sigma)^-2 psi(alpha_i(sigma) (W x)_{i,k})
//! ```
//!
//! where `psi` is the primitive of the activation `phi = mu phi_plus - phi_minus`,
//! both splines odd, non-decreasing and non-expansive, and
//! `alpha_i(sigma) = exp(s_i(sigma)) / (sigma + eps)` with `s_i` an 11-knot linear
//! spline on `[0, sigma_max]`. Because `phi' >= -1` and `||W|| = 1`, the Hessian
//! of `R` is bounded below by `-1`, whatever the values of the `alpha_i`.

use std::io::{self, Write};

use ndarray::{Array2, Array3, Array4, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::convstack::{ConvStack, NormMethod, NormalizedConv};
use crate::error::{Error, Result};
use crate::linalg;
use crate::spline::{self, LinearSpline};

pub const DEFAULT_SIGMA_MAX: f64 = 30.0 / 255.0;
pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_DELTA: f64 = 2e-3;
pub const DEFAULT_INTERVALS: usize = 100;
pub const ALPHA_INTERVALS: usize = 10;

/// Fixed architecture and spline-grid settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Output channels of each convolution layer; the last entry is `N_C`.
    pub widths: Vec<usize>,
    /// Kernel side `k_s` (odd).
    pub kernel_size: usize,
    /// Knot intervals `M` of the activation splines (even).
    pub intervals: usize,
    pub delta: f64,
    pub sigma_max: f64,
    pub epsilon: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            widths: vec![4, 8, 60],
            kernel_size: 5,
            intervals: DEFAULT_INTERVALS,
            delta: DEFAULT_DELTA,
            sigma_max: DEFAULT_SIGMA_MAX,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl Hyperparams {
    pub fn channels(&self) -> usize {
        *self.widths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.iter().any(|w| *w == 0) {
            return Err(Error::InvalidArgument("channel widths must be positive".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::InvalidArgument("kernel size must be odd".into()));
        }
        if self.intervals % 2 != 0 || self.intervals < 2 {
            return Err(Error::InvalidArgument("spline interval count must be even".into()));
        }
        if !(self.delta > 0.0 && self.sigma_max > 0.0 && self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("delta, sigma_max and epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Knot spacing of the noise-scaling splines.
    pub fn alpha_delta(&self) -> f64 {
        self.sigma_max / ALPHA_INTERVALS as f64
    }
}

/// Unconstrained learnable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Raw kernels; the zero-mean constraint is applied on read.
    pub kernels: Vec<Array4<f64>>,
    /// Raw `mu`; clamped to `[0, inf)` on read.
    pub mu: f64,
    /// Raw spline coefficients of `phi_plus` / `phi_minus`; projected and
    /// symmetrized on read.
    pub c_plus: Vec<f64>,
    pub c_minus: Vec<f64>,
    /// `(N_C, 11)` coefficients of the splines `s_i(sigma)`.
    pub alpha: Array2<f64>,
}

impl Params {
    /// Initialization: random kernels, `c_plus = 0`, `c_minus = tau` (so that
    /// `phi = -t` on the grid) and constant `alpha_init` noise splines.
    pub fn init(hyper: &Hyperparams, mu: f64, alpha_init: f64, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let stack = ConvStack::random(&hyper.widths, hyper.kernel_size, seed)?;
        Ok(Self {
            kernels: stack.raw().to_vec(),
            mu,
            c_plus: vec![0.0; hyper.intervals + 1],
            c_minus: spline::knots(hyper.delta, hyper.intervals),
            alpha: Array2::from_elem((hyper.channels(), ALPHA_INTERVALS + 1), alpha_init),
        })
    }

    /// Random parameters for tests and demos: random kernels and spline
    /// coefficients (uniform differences in `[-0.5, 1.5] delta`), alpha
    /// coefficients drawn around `alpha_center`.
    pub fn random(hyper: &Hyperparams, mu: f64, alpha_center: f64, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let stack = ConvStack::random(&hyper.widths, hyper.kernel_size, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let walk = |rng: &mut ChaCha8Rng| {
            let mut c = Vec::with_capacity(hyper.intervals + 1);
            let mut acc = 0.0;
            for _ in 0..=hyper.intervals {
                c.push(acc);
                let u: f64 = rand::Rng::random_range(rng, -0.5..1.5);
                acc += u * hyper.delta;
            }
            c
        };
        let c_plus = walk(&mut rng);
        let c_minus = walk(&mut rng);
        let alpha = Array2::from_shape_simple_fn((hyper.channels(), ALPHA_INTERVALS + 1), || {
            let g: f64 = StandardNormal.sample(&mut rng);
            alpha_center + 0.3 * g
        });
        Ok(Self { kernels: stack.raw().to_vec(), mu, c_plus, c_minus, alpha })
    }

    pub fn check_shapes(&self, hyper: &Hyperparams) -> Result<()> {
        let n = hyper.intervals + 1;
        if self.c_plus.len() != n || self.c_minus.len() != n {
            return Err(Error::Shape(format!("activation splines need {n} coefficients")));
        }
        if self.alpha.dim() != (hyper.channels(), ALPHA_INTERVALS + 1) {
            return Err(Error::Shape(format!(
                "alpha coefficients must be {}x{}, got {:?}",
                hyper.channels(),
                ALPHA_INTERVALS + 1,
                self.alpha.dim()
            )));
        }
        if self.kernels.len() != hyper.widths.len() {
            return Err(Error::Shape("kernel count does not match the channel widths".into()));
        }
        let mut c_in = 1;
        for (k, &c_out) in self.kernels.iter().zip(&hyper.widths) {
            if k.dim() != (c_out, c_in, hyper.kernel_size, hyper.kernel_size) {
                return Err(Error::Shape(format!("unexpected kernel shape {:?}", k.dim())));
            }
            c_in = c_out;
        }
        Ok(())
    }
}

/// A weakly convex ridge regularizer with its effective (constrained) splines
/// and normalized convolution cached.
#[derive(Debug, Clone, PartialEq)]
pub struct WcrrModel {
    hyper: Hyperparams,
    params: Params,
    conv: NormalizedConv,
    /// Scale applied to `phi_minus`; `1` gives the certified 1-weak convexity,
    /// values below one cap the modulus (used during training).
    rho_cap: f64,
    phi_plus: Vec<f64>,
    phi_minus: Vec<f64>,
    phi: LinearSpline,
    alpha_splines: Vec<LinearSpline>,
}

impl WcrrModel {
    /// Builds the model, computing `||U||` with the given method.
    pub fn new(hyper: Hyperparams, params: Params, method: NormMethod) -> Result<Self> {
        hyper.validate()?;
        params.check_shapes(&hyper)?;
        let stack = ConvStack::new(params.kernels.clone())?;
        let conv = NormalizedConv::new(stack, method)?;
        Self::assemble(hyper, params, conv, 1.0)
    }

    /// Builds the model with a known operator norm.
    pub fn with_norm(hyper: Hyperparams, params: Params, norm: f64, method: NormMethod) -> Result<Self> {
        hyper.validate()?;
        params.check_shapes(&hyper)?;
        let stack = ConvStack::new(params.kernels.clone())?;
        let conv = NormalizedConv::with_norm(stack, norm, method)?;
        Self::assemble(hyper, params, conv, 1.0)
    }

    fn assemble(hyper: Hyperparams, params: Params, conv: NormalizedConv, rho_cap: f64) -> Result<Self> {
        let phi_plus = spline::symmetrize_odd(&params.c_plus, hyper.delta);
        let phi_minus = spline::symmetrize_odd(&params.c_minus, hyper.delta);
        let mu = params.mu.max(0.0);
        let coeffs: Vec<f64> = phi_plus.iter().zip(&phi_minus).map(|(p, m)| mu * p - rho_cap * m).collect();
        let phi = LinearSpline::new(hyper.delta, coeffs)?;
        let alpha_splines = params
            .alpha
            .axis_iter(Axis(0))
            .map(|row| LinearSpline::new(hyper.alpha_delta(), row.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { hyper, params, conv, rho_cap, phi_plus, phi_minus, phi, alpha_splines })
    }

    /// Same parameters and norm, with `phi_minus` scaled by `rho_cap`.
    pub fn with_rho_cap(&self, rho_cap: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho_cap) {
            return Err(Error::InvalidArgument(format!("rho cap must lie in [0, 1], got {rho_cap}")));
        }
        Self::assemble(self.hyper.clone(), self.params.clone(), self.conv.clone(), rho_cap)
    }

    /// Same model with a different raw `mu`.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        let mut params = self.params.clone();
        params.mu = mu;
        Self::assemble(self.hyper.clone(), params, self.conv.clone(), self.rho_cap)
    }

    /// Same model with replaced noise-scaling coefficients.
    pub fn with_alpha(&self, alpha: Array2<f64>) -> Result<Self> {
        let mut params = self.params.clone();
        params.alpha = alpha;
        params.check_shapes(&self.hyper)?;
        Self::assemble(self.hyper.clone(), params, self.conv.clone(), self.rho_cap)
    }

    /// Recomputes `||U||` with a new method (e.g. the firm power-method norm).
    pub fn renormalized(&self, method: NormMethod) -> Result<Self> {
        let conv = NormalizedConv::new(self.conv.stack().clone(), method)?;
        Self::assemble(self.hyper.clone(), self.params.clone(), conv, self.rho_cap)
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn conv(&self) -> &NormalizedConv {
        &self.conv
    }

    pub fn rho_cap(&self) -> f64 {
        self.rho_cap
    }

    pub fn channels(&self) -> usize {
        self.hyper.channels()
    }

    /// Effective `mu >= 0`.
    pub fn mu(&self) -> f64 {
        self.params.mu.max(0.0)
    }

    pub fn sigma_max(&self) -> f64 {
        self.hyper.sigma_max
    }

    /// Effective coefficients of `phi_plus` (odd, monotone, non-expansive).
    pub fn phi_plus_coeffs(&self) -> &[f64] {
        &self.phi_plus
    }

    pub fn phi_minus_coeffs(&self) -> &[f64] {
        &self.phi_minus
    }

    /// The activation `phi = mu phi_plus - rho_cap phi_minus` as a single spline.
    pub fn phi(&self) -> &LinearSpline {
        &self.phi
    }

    pub fn activation_phi(&self, t: f64) -> f64 {
        self.phi.eval(t)
    }

    /// The profile `psi`, primitive of `phi` with `psi(0) = 0`.
    pub fn profile_psi(&self, t: f64) -> f64 {
        self.phi.eval_antiderivative(t)
    }

    /// `s_i(sigma)`, the log-scale spline of channel `i`, over `[0, sigma_max]`.
    pub fn log_alpha(&self, channel: usize, sigma: f64) -> f64 {
        self.alpha_splines[channel].eval(sigma - 0.5 * self.hyper.sigma_max)
    }

    pub fn alpha(&self, channel: usize, sigma: f64) -> f64 {
        self.log_alpha(channel, sigma).exp() / (sigma + self.hyper.epsilon)
    }

    pub fn alphas(&self, sigma: f64) -> Vec<f64> {
        (0..self.channels()).map(|i| self.alpha(i, sigma)).collect()
    }

    /// Filter responses `W x`.
    pub fn features(&self, x: &Array2<f64>) -> Array3<f64> {
        self.conv.apply(x)
    }

    fn energy_of_features(&self, z: &Array3<f64>, alphas: &[f64]) -> f64 {
        z.axis_iter(Axis(0))
            .zip(alphas)
            .map(|(zi, &a)| {
                let inv2 = 1.0 / (a * a);
                zi.iter().map(|&v| self.phi.eval_antiderivative(a * v)).sum::<f64>() * inv2
            })
            .sum()
    }

    pub fn energy(&self, x: &Array2<f64>, sigma: f64) -> f64 {
        let alphas = self.alphas(sigma);
        self.energy_of_features(&self.features(x), &alphas)
    }

    pub fn grad(&self, x: &Array2<f64>, sigma: f64) -> Array2<f64> {
        let alphas = self.alphas(sigma);
        let mut z = self.features(x);
        for (mut zi, &a) in z.axis_iter_mut(Axis(0)).zip(&alphas) {
            let inv = 1.0 / a;
            zi.mapv_inplace(|v| self.phi.eval(a * v) * inv);
        }
        self.conv.adjoint(&z)
    }

    /// Energy and gradient `W^T [alpha_i^-1 phi(alpha_i (W x)_i)]_i` from one
    /// pass through the convolutions.
    pub fn energy_and_grad(&self, x: &Array2<f64>, sigma: f64) -> (f64, Array2<f64>) {
        let alphas = self.alphas(sigma);
        let mut z = self.features(x);
        let energy = self.energy_of_features(&z, &alphas);
        for (mut zi, &a) in z.axis_iter_mut(Axis(0)).zip(&alphas) {
            let inv = 1.0 / a;
            zi.mapv_inplace(|v| self.phi.eval(a * v) * inv);
        }
        (energy, self.conv.adjoint(&z))
    }

    /// The Hessian `H_R(x)` as a reusable operator.
    pub fn hessian_at(&self, x: &Array2<f64>, sigma: f64) -> Hessian<'_> {
        let alphas = self.alphas(sigma);
        let mut z = self.features(x);
        for (mut zi, &a) in z.axis_iter_mut(Axis(0)).zip(&alphas) {
            zi.mapv_inplace(|v| self.phi.eval_derivative(a * v));
        }
        Hessian { model: self, curvature: z }
    }

    /// `H_R(x) u = W^T (phi'(alpha W x) . (W u))`.
    pub fn hvp(&self, x: &Array2<f64>, u: &Array2<f64>, sigma: f64) -> Array2<f64> {
        self.hessian_at(x, sigma).apply(u)
    }

    /// Certified weak-convexity modulus `max(0, -min phi')`, from a scan of the
    /// knot-interval slopes (exact for a linear spline).
    pub fn weak_convexity_bound(&self) -> f64 {
        let min_slope = self.phi.slopes().into_iter().fold(0.0, f64::min);
        (-min_slope).max(0.0)
    }

    /// Upper bound `max(mu, 1)` on the Lipschitz constant of the gradient
    /// (valid when `||W|| <= 1`).
    pub fn lipschitz_bound(&self) -> f64 {
        self.mu().max(1.0)
    }

    /// Smallest eigenvalue of `H_R(x)` by power iteration on `c I - H_R(x)`
    /// with `c` the Lipschitz bound.
    pub fn min_hessian_eigenvalue(&self, x: &Array2<f64>, sigma: f64, iters: usize, seed: u64) -> f64 {
        let h = self.hessian_at(x, sigma);
        let c = self.lipschitz_bound();
        let top = linalg::power_iteration(|u| u * c - &h.apply(u), x.dim(), iters, seed);
        c - top
    }

    /// CSV of `t, phi(t), psi(t), phi_plus(t), phi_minus(t)` sampled on
    /// `[-1.2 t_max, 1.2 t_max]`.
    pub fn write_profile_csv<W: Write>(&self, mut out: W, samples: usize) -> io::Result<()> {
        let plus = LinearSpline::new(self.hyper.delta, self.phi_plus.clone()).expect("valid grid");
        let minus = LinearSpline::new(self.hyper.delta, self.phi_minus.clone()).expect("valid grid");
        let span = 1.2 * self.phi.t_max();
        writeln!(out, "t,phi,psi,phi_plus,phi_minus")?;
        let n = samples.max(2);
        for k in 0..n {
            let t = -span + 2.0 * span * k as f64 / (n - 1) as f64;
            writeln!(
                out,
                "{t},{},{},{},{}",
                self.phi.eval(t),
                self.phi.eval_antiderivative(t),
                plus.eval(t),
                minus.eval(t)
            )?;
        }
        Ok(())
    }

    /// CSV of `alpha_i(sigma)` for every channel on a uniform sigma grid.
    pub fn write_alpha_csv<W: Write>(&self, mut out: W, samples: usize) -> io::Result<()> {
        write!(out, "sigma")?;
        for i in 0..self.channels() {
            write!(out, ",alpha_{i}")?;
        }
        writeln!(out)?;
        let n = samples.max(2);
        for k in 0..n {
            let sigma = self.hyper.sigma_max * k as f64 / (n - 1) as f64;
            write!(out, "{sigma}")?;
            for i in 0..self.channels() {
                write!(out, ",{}", self.alpha(i, sigma))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `H_R(x)` frozen at a point: `u -> W^T (curvature . W u)`.
pub struct Hessian<'a> {
    model: &'a WcrrModel,
    curvature: Array3<f64>,
}

impl Hessian<'_> {
    pub fn apply(&self, u: &Array2<f64>) -> Array2<f64> {
        let mut wu = self.model.features(u);
        Zip::from(&mut wu).and(&self.curvature).for_each(|a, &c| *a *= c);
        self.model.conv.adjoint(&wu)
    }

    /// `phi'(alpha_i (W x)_{i,k})` per channel and pixel.
    pub fn curvature(&self) -> &Array3<f64> {
        &self.curvature
    }
}
