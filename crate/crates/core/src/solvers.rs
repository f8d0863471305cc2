//! Accelerated gradient solvers: restarted AGD for the proximal denoising
//! problem and safeguarded AGD for weakly convex inverse problems
//!
//! ```text
//! J(x) = 1/2 ||H x - y||^2 + lambda R(x; sigma)
//! ```

use std::io::{self, Write};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::forward::MeasurementOp;
use crate::linalg::{self, dot, norm};
use crate::regularizer::WcrrModel;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Stop once `||x_{k+1} - x_k|| / ||x_k|| <= tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Safeguard slack `a > 1`.
    pub a: f64,
    /// Fixed step size, replacing `1 / L`.
    pub step_override: Option<f64>,
    /// Record objective values (costs one extra profile evaluation per step).
    pub track_objective: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_iters: 2000, a: 2.0, step_override: None, track_objective: true }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be >= 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if !(self.a > 1.0) {
            return Err(Error::InvalidArgument(format!("safeguard slack must exceed 1, got {}", self.a)));
        }
        if let Some(s) = self.step_override {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("step size must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    MaxIters,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tolerance => "tolerance",
            Self::MaxIters => "max_iters",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    /// Objective at the extrapolated point `z_k` of each iteration (empty when
    /// not tracked).
    pub objective_trace: Vec<f64>,
    /// `||grad J(z_k)||` per iteration.
    pub grad_norm_trace: Vec<f64>,
    pub restart_flags: Vec<bool>,
    /// `||z_k - z_{k-1}||` per iteration.
    pub step_lengths: Vec<f64>,
    pub restart_count: usize,
    pub stop_reason: StopReason,
    /// Gradient norm at the initial point.
    pub initial_grad_norm: f64,
    /// Gradient norm at the returned point.
    pub final_grad_norm: f64,
    /// Lipschitz constant used for the step (`1 / step`).
    pub lipschitz: f64,
}

impl SolveReport {
    /// `iteration,objective,grad_norm,restart` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iteration,objective,grad_norm,restart")?;
        for k in 0..self.grad_norm_trace.len() {
            let obj = self.objective_trace.get(k).map_or(String::new(), |v| v.to_string());
            writeln!(out, "{},{},{},{}", k + 1, obj, self.grad_norm_trace[k], u8::from(self.restart_flags[k]))?;
        }
        Ok(())
    }
}

fn check_finite(value: f64, what: &str, k: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} became {value} at iteration {k}")))
    }
}

/// Proximal denoiser `argmin_x 1/2 ||x - y||^2 + R(x; sigma)`, solved by AGD with
/// step `1 / (1 + max(1, mu))` and gradient-based restart, starting from `y`.
/// On `max_iters` the iterate with the smallest objective is returned.
pub fn prox_denoise(model: &WcrrModel, y: &Array2<f64>, sigma: f64, opts: &SolveOptions) -> Result<(Array2<f64>, SolveReport)> {
    opts.validate()?;
    if !(0.0..=model.sigma_max()).contains(&sigma) {
        return Err(Error::InvalidArgument(format!("sigma {sigma} outside [0, {}]", model.sigma_max())));
    }
    let lipschitz = opts.step_override.map_or(1.0 + model.lipschitz_bound(), |s| 1.0 / s);
    let step = 1.0 / lipschitz;
    let eval = |x: &Array2<f64>, with_value: bool| -> (Option<f64>, Array2<f64>) {
        let diff = x - y;
        if with_value {
            let (r, g) = model.energy_and_grad(x, sigma);
            (Some(0.5 * dot(&diff, &diff) + r), g + &diff)
        } else {
            (None, model.grad(x, sigma) + &diff)
        }
    };

    let mut report = SolveReport {
        iterations: 0,
        objective_trace: Vec::new(),
        grad_norm_trace: Vec::new(),
        restart_flags: Vec::new(),
        step_lengths: Vec::new(),
        restart_count: 0,
        stop_reason: StopReason::MaxIters,
        initial_grad_norm: 0.0,
        final_grad_norm: 0.0,
        lipschitz,
    };
    let mut x_prev = y.clone();
    let mut z = y.clone();
    let mut z_prev = y.clone();
    let mut t = 1.0_f64;
    let mut best: Option<(f64, Array2<f64>)> = None;
    for k in 1..=opts.max_iters {
        let (value, g) = eval(&z, opts.track_objective);
        let gn = norm(&g);
        check_finite(gn, "gradient norm", k)?;
        if k == 1 {
            report.initial_grad_norm = gn;
        }
        if let Some(v) = value {
            check_finite(v, "objective", k)?;
            report.objective_trace.push(v);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, z.clone()));
            }
        }
        report.grad_norm_trace.push(gn);
        report.step_lengths.push(linalg::norm(&(&z - &z_prev)));
        z_prev = z.clone();

        let x = &z - &(&g * step);
        let restart = dot(&g, &(&x - &x_prev)) > 0.0;
        report.restart_flags.push(restart);
        let t_next;
        if restart {
            report.restart_count += 1;
            t_next = 1.0;
            z = x.clone();
        } else {
            t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            z = &x + &((&x - &x_prev) * ((t - 1.0) / t_next));
        }
        t = t_next;
        let rel = linalg::relative_change(&x, &x_prev);
        x_prev = x;
        report.iterations = k;
        if rel <= opts.tol {
            report.stop_reason = StopReason::Tolerance;
            break;
        }
    }
    let out = match (report.stop_reason, best) {
        (StopReason::MaxIters, Some((_, b))) => b,
        _ => x_prev,
    };
    report.final_grad_norm = norm(&eval(&out, false).1);
    Ok((out, report))
}

/// Step-size constant `L = ||H||^2 + lambda max(mu, 1)` of [`sagd_solve`].
pub fn sagd_lipschitz(op_norm: f64, lambda: f64, model: &WcrrModel) -> f64 {
    op_norm * op_norm + lambda * model.lipschitz_bound()
}

/// `J(x) = 1/2 ||H x - y||^2 + lambda R(x; sigma)`.
pub fn objective(
    op: &MeasurementOp,
    y: &Array1<f64>,
    lambda: f64,
    model: &WcrrModel,
    sigma: f64,
    x: &Array2<f64>,
) -> Result<f64> {
    let r = op.apply(x)? - y;
    let data = 0.5 * r.dot(&r);
    if lambda == 0.0 {
        return Ok(data);
    }
    Ok(data + lambda * model.energy(x, sigma))
}

/// Value and gradient of `J`.
pub fn objective_and_grad(
    op: &MeasurementOp,
    y: &Array1<f64>,
    lambda: f64,
    model: &WcrrModel,
    sigma: f64,
    x: &Array2<f64>,
) -> Result<(f64, Array2<f64>)> {
    let r = op.apply(x)? - y;
    let (e, g) = model.energy_and_grad(x, sigma);
    let value = 0.5 * r.dot(&r) + lambda * e;
    Ok((value, op.adjoint(&r)? + &(g * lambda)))
}

/// Safeguarded AGD on `J`, from `x0`.
///
/// Each iteration extrapolates `z_k = x_k + (t_{k-1} - 1) / t_k (x_k - x_{k-1})`,
/// falls back to `z_k = x_k` with `t_k = t_{k-1} = 1` whenever
/// `<grad J(z_k), z_k - z_{k-1}> + a lambda / 2 ||z_k - z_{k-1}||^2 > 0`, and
/// takes the step `x_{k+1} = z_k - grad J(z_k) / L` with
/// `L = ||H||^2 + lambda max(mu, 1)`.
pub fn sagd_solve(
    op: &MeasurementOp,
    y: &Array1<f64>,
    lambda: f64,
    model: &WcrrModel,
    sigma: f64,
    x0: &Array2<f64>,
    opts: &SolveOptions,
) -> Result<(Array2<f64>, SolveReport)> {
    opts.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if x0.dim() != op.image_shape() {
        return Err(Error::Shape(format!("x0 is {:?}, operator expects {:?}", x0.dim(), op.image_shape())));
    }
    if y.len() != op.measurement_len() {
        return Err(Error::Shape(format!("{} measurements, operator produces {}", y.len(), op.measurement_len())));
    }
    let lipschitz = match opts.step_override {
        Some(s) => 1.0 / s,
        None => sagd_lipschitz(op.norm_estimate(), lambda, model),
    };
    let eval = |x: &Array2<f64>| objective_and_grad(op, y, lambda, model, sigma, x);

    let mut report = SolveReport {
        iterations: 0,
        objective_trace: Vec::new(),
        grad_norm_trace: Vec::new(),
        restart_flags: Vec::new(),
        step_lengths: Vec::new(),
        restart_count: 0,
        stop_reason: StopReason::MaxIters,
        initial_grad_norm: 0.0,
        final_grad_norm: 0.0,
        lipschitz,
    };
    let mut x_prev = x0.clone();
    let mut x = x0.clone();
    let mut z_prev = x0.clone();
    let (mut t_prev, mut t) = (1.0_f64, 1.0_f64);
    let mut k = 1;
    loop {
        if k > 1 && linalg::relative_change(&x, &x_prev) <= opts.tol {
            report.stop_reason = StopReason::Tolerance;
            break;
        }
        if k > opts.max_iters {
            break;
        }
        let mut z = &x + &((&x - &x_prev) * ((t_prev - 1.0) / t));
        let (mut value, mut g) = eval(&z)?;
        check_finite(value, "objective", k)?;
        if k == 1 {
            report.initial_grad_norm = norm(&g);
        }
        let d = &z - &z_prev;
        let crit = dot(&g, &d) + 0.5 * opts.a * lambda * dot(&d, &d);
        let restart = crit > 0.0;
        if restart {
            report.restart_count += 1;
            z = x.clone();
            (value, g) = eval(&z)?;
            check_finite(value, "objective", k)?;
            // t_{k-1} = 1 takes effect through the shift below
            t = 1.0;
        }
        let gn = norm(&g);
        check_finite(gn, "gradient norm", k)?;
        report.objective_trace.push(value);
        report.grad_norm_trace.push(gn);
        report.restart_flags.push(restart);
        report.step_lengths.push(norm(&(&z - &z_prev)));

        let x_next = &z - &(&g / lipschitz);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        x_prev = std::mem::replace(&mut x, x_next);
        z_prev = z;
        t_prev = t;
        t = t_next;
        report.iterations = k;
        k += 1;
    }
    report.final_grad_norm = norm(&eval(&x)?.1);
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convstack::NormMethod;
    use crate::regularizer::{Hyperparams, Params};

    fn zero_model() -> WcrrModel {
        let hyper = Hyperparams { widths: vec![2], kernel_size: 3, ..Hyperparams::default() };
        let mut params = Params::random(&hyper, 1.0, 3.0, 1).unwrap();
        params.mu = 0.0;
        params.c_minus = vec![0.0; params.c_minus.len()];
        WcrrModel::new(hyper, params, NormMethod::DftEstimate { h: 16, w: 16 }).unwrap()
    }

    #[test]
    fn zero_regularizer_prox_is_identity() {
        let model = zero_model();
        let y = linalg::gaussian_image(8, 8, 2);
        let (x, rep) = prox_denoise(&model, &y, 0.05, &SolveOptions::default()).unwrap();
        assert_eq!(x, y);
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.stop_reason, StopReason::Tolerance);
    }

    #[test]
    fn zero_regularizer_sagd_is_one_step() {
        let model = zero_model();
        let y = linalg::gaussian_image(6, 6, 3);
        let op = MeasurementOp::identity(6, 6);
        let yv = op.apply(&y).unwrap();
        let opts = SolveOptions { step_override: Some(1.0), ..SolveOptions::default() };
        let (x, rep) = sagd_solve(&op, &yv, 1.0, &model, 0.05, &Array2::zeros((6, 6)), &opts).unwrap();
        assert!(linalg::relative_change(&x, &y) < 1e-15);
        // one effective step, the second iteration only confirms convergence
        assert!(rep.iterations <= 2);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let model = zero_model();
        let op = MeasurementOp::identity(4, 4);
        let y = Array1::zeros(16);
        let x0 = Array2::zeros((4, 4));
        assert!(sagd_solve(&op, &y, 0.0, &model, 0.05, &x0, &SolveOptions::default()).is_err());
        assert!(sagd_solve(&op, &y, -1.0, &model, 0.05, &x0, &SolveOptions::default()).is_err());
        let bad = SolveOptions { a: 1.0, ..SolveOptions::default() };
        assert!(sagd_solve(&op, &y, 1.0, &model, 0.05, &x0, &bad).is_err());
        assert!(prox_denoise(&model, &x0, 1.0, &SolveOptions::default()).is_err());
    }

    #[test]
    fn objective_trivial_cases() {
        let model = zero_model();
        let op = MeasurementOp::identity(4, 4);
        let x = linalg::gaussian_image(4, 4, 5);
        let y = op.apply(&x).unwrap();
        assert_eq!(objective(&op, &y, 1.0, &model, 0.1, &x).unwrap(), 0.0);
        let zero = Array1::zeros(16);
        let direct = 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        assert!((objective(&op, &zero, 0.0, &model, 0.1, &x).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn report_csv_layout() {
        let rep = SolveReport {
            iterations: 2,
            objective_trace: vec![2.0, 1.0],
            grad_norm_trace: vec![0.5, 0.25],
            restart_flags: vec![false, true],
            step_lengths: vec![0.0, 0.1],
            restart_count: 1,
            stop_reason: StopReason::Tolerance,
            initial_grad_norm: 0.5,
            final_grad_norm: 0.1,
            lipschitz: 2.0,
        };
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,objective,grad_norm,restart\n1,2,0.5,0\n2,1,0.25,1\n");
    }
}
