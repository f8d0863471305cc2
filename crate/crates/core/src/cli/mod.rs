//! Command-line layer: `train`, `denoise`, `reconstruct`, `eval`, `tune` and
//! `inspect`. Every command reads a [`RunConfig`], writes its outputs and the
//! resolved configuration into `out_dir`, and returns a [`Summary`] of
//! `key=value` results.

pub mod checkpoint;
pub mod config;
pub mod problem;
pub mod tune;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::PatchDataset;
use crate::error::{Error, Result};
use crate::imageio::{self, PgmDepth};
use crate::metrics;
use crate::regularizer::{Hyperparams, WcrrModel};
use crate::solvers::{prox_denoise, sagd_lipschitz, sagd_solve, SolveOptions};
use crate::training::{self, export_model, train_with, TrainConfig};

pub use config::{key, KeySpec, RunConfig};
use problem::{load_source, problem_keys, Problem};
use tune::{coarse_to_fine, TuneBounds};

pub const COMMANDS: [&str; 6] = ["train", "denoise", "reconstruct", "eval", "tune", "inspect"];

/// Ordered `key=value` results of a command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// The accepted keys and their defaults for `command`.
pub fn schema(command: &str) -> Result<Vec<KeySpec>> {
    let mut keys = match command {
        "train" => train_keys(),
        "denoise" => vec![
            key("checkpoint", ""),
            key("input", ""),
            key("size", 64),
            key("sigma", ""),
            key("noise", 0),
            key("noise_seed", 0),
            key("reference", ""),
            key("tol", 1e-4),
            key("max_iters", 2000),
        ],
        "reconstruct" => {
            let mut k = problem_keys();
            k.extend([
                key("checkpoint", ""),
                key("lambda", ""),
                key("sigma", ""),
                key("ground_truth", "shepp_logan"),
                key("measurements", ""),
                key("x0", ""),
                key("baseline_lambda", 1e-2),
                key("tol", 1e-5),
                key("max_iters", 5000),
            ]);
            k
        }
        "tune" => {
            let mut k = problem_keys();
            k.extend([
                key("checkpoint", ""),
                key("validation", "phantom:1,phantom:2,phantom:3"),
                key("lambda_min", ""),
                key("lambda_max", ""),
                key("sigma_min", 1.0 / 255.0),
                key("sigma_max", ""),
                key("grid", 4),
                key("rounds", 3),
                key("tol", 1e-4),
                key("max_iters", 1000),
            ]);
            k
        }
        "eval" => vec![key("reference", ""), key("candidate", "")],
        "inspect" => vec![key("checkpoint", ""), key("samples", 801)],
        _ => return Err(Error::Config(format!("unknown command {command:?}"))),
    };
    keys.push(key("out_dir", format!("runs/{command}")));
    Ok(keys)
}

fn train_keys() -> Vec<KeySpec> {
    let d = TrainConfig::desk();
    let widths: Vec<String> = d.hyper.widths.iter().map(|w| w.to_string()).collect();
    vec![
        key("dataset", "dead_leaves"),
        key("num_images", 42),
        key("image_size", 64),
        key("stride", 8),
        key("data_seed", 1000),
        key("patch_size", d.patch_size),
        key("widths", widths.join(",")),
        key("kernel_size", d.hyper.kernel_size),
        key("intervals", d.hyper.intervals),
        key("delta", d.hyper.delta),
        key("sigma_max", d.hyper.sigma_max),
        key("epsilon", d.hyper.epsilon),
        key("steps", d.steps),
        key("batch_size", d.batch_size),
        key("lr_mu", d.lr_mu),
        key("lr_conv", d.lr_conv),
        key("lr_alpha", d.lr_alpha),
        key("lr_splines", d.lr_splines),
        key("lr_decay", d.lr_decay),
        key("decay_every", d.decay_every),
        key("forward_tol", d.forward_tol),
        key("forward_max_iters", d.forward_max_iters),
        key("backward_tol", d.backward_tol),
        key("backward_max_iters", d.backward_max_iters),
        key("rho_cap", d.rho_cap),
        key("mu_init", d.mu_init),
        key("alpha_init", d.alpha_init),
        key("norm_grid", d.norm_grid),
        key("export_grid", d.export_grid),
        key("export_iters", d.export_iters),
        key("seed", d.seed),
        key("checkpoint_every", 100),
    ]
}

/// Resolves the configuration (defaults, file, `--key value` flags) and runs
/// `command`.
pub fn run(command: &str, config_file: Option<&Path>, flags: &[String]) -> Result<Summary> {
    let cfg = RunConfig::resolve(&schema(command)?, config_file, &config::parse_flags(flags)?)?;
    run_command(command, &cfg)
}

pub fn run_command(command: &str, cfg: &RunConfig) -> Result<Summary> {
    let out = prepare_out_dir(cfg)?;
    let summary = match command {
        "train" => cmd_train(cfg, &out),
        "denoise" => cmd_denoise(cfg, &out),
        "reconstruct" => cmd_reconstruct(cfg, &out),
        "eval" => cmd_eval(cfg),
        "tune" => cmd_tune(cfg, &out),
        "inspect" => cmd_inspect(cfg, &out),
        _ => Err(Error::Config(format!("unknown command {command:?}"))),
    }?;
    std::fs::write(out.join("summary.txt"), summary.to_text())?;
    Ok(summary)
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let out = PathBuf::from(cfg.get::<String>("out_dir")?);
    std::fs::create_dir_all(&out)?;
    cfg.write(&out.join("config.txt"))?;
    Ok(out)
}

fn csv_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io_at(path, e))?))
}

fn load_checkpoint(cfg: &RunConfig) -> Result<WcrrModel> {
    let path: String = cfg.get("checkpoint")?;
    checkpoint::load(Path::new(&path))
}

/// Clamps `sigma` into `[0, sigma_max]`, with a warning.
fn clamp_sigma(sigma: f64, model: &WcrrModel) -> Result<f64> {
    if !sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be finite, got {sigma}")));
    }
    let clamped = sigma.clamp(0.0, model.sigma_max());
    if clamped != sigma {
        warn!("sigma {sigma} outside [0, {}], clamped to {clamped}", model.sigma_max());
    }
    Ok(clamped)
}

fn add_noise(x: &Array2<f64>, level: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.mapv(|v| {
        let g: f64 = StandardNormal.sample(&mut rng);
        v + level * g
    })
}

fn write_pair(out: &Path, stem: &str, img: &Array2<f64>) -> Result<()> {
    imageio::write_pfm(&out.join(format!("{stem}.pfm")), img)?;
    imageio::write_pgm(&out.join(format!("{stem}.pgm")), img, PgmDepth::Sixteen)
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let config = TrainConfig {
        hyper: Hyperparams {
            widths: cfg.list("widths")?,
            kernel_size: cfg.get("kernel_size")?,
            intervals: cfg.get("intervals")?,
            delta: cfg.get("delta")?,
            sigma_max: cfg.get("sigma_max")?,
            epsilon: cfg.get("epsilon")?,
        },
        patch_size: cfg.get("patch_size")?,
        batch_size: cfg.get("batch_size")?,
        steps: cfg.get("steps")?,
        lr_mu: cfg.get("lr_mu")?,
        lr_conv: cfg.get("lr_conv")?,
        lr_alpha: cfg.get("lr_alpha")?,
        lr_splines: cfg.get("lr_splines")?,
        lr_decay: cfg.get("lr_decay")?,
        decay_every: cfg.get("decay_every")?,
        forward_tol: cfg.get("forward_tol")?,
        forward_max_iters: cfg.get("forward_max_iters")?,
        backward_tol: cfg.get("backward_tol")?,
        backward_max_iters: cfg.get("backward_max_iters")?,
        rho_cap: cfg.get("rho_cap")?,
        mu_init: cfg.get("mu_init")?,
        alpha_init: cfg.get("alpha_init")?,
        norm_grid: cfg.get("norm_grid")?,
        export_grid: cfg.get("export_grid")?,
        export_iters: cfg.get("export_iters")?,
        seed: cfg.get("seed")?,
    };
    config.validate()?;
    let dataset_spec: String = cfg.get("dataset")?;
    let stride: usize = cfg.get("stride")?;
    let dataset = if dataset_spec == "dead_leaves" {
        PatchDataset::dead_leaves(cfg.get("num_images")?, cfg.get("image_size")?, config.patch_size, stride, cfg.get("data_seed")?)?
    } else {
        PatchDataset::from_pgm_dir(Path::new(&dataset_spec), config.patch_size, stride)?
    };
    info!("training on {} patches of {}x{} ({})", dataset.len(), config.patch_size, config.patch_size, dataset.source());
    let every: usize = cfg.get("checkpoint_every")?;
    let outcome = train_with(&dataset, &config, |row, params| {
        if row.step % 25 == 0 || row.step == 1 {
            info!("step {} loss {:.4} mae {:.5} mu {:.3} |U| {:.3}", row.step, row.loss, row.mean_abs_error, row.mu, row.norm);
        }
        if every > 0 && row.step % every == 0 && row.step < config.steps {
            let m = export_model(&config.hyper, params, config.export_grid, config.export_iters)?;
            checkpoint::save(&m, &out.join(format!("checkpoint_{:05}.wcrr", row.step)))?;
        }
        Ok(())
    })?;
    training::write_log_csv(csv_file(&out.join("train_log.csv"))?, &outcome.log)?;
    let model_path = out.join("model.wcrr");
    checkpoint::save(&outcome.model, &model_path)?;
    let mut s = Summary::default();
    s.push("model", model_path.display());
    s.push("patches", dataset.len());
    s.push("steps", config.steps);
    if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
        s.push("first_mae", first.mean_abs_error);
        s.push("last_mae", last.mean_abs_error);
    }
    s.push("mu", outcome.model.mu());
    s.push("s_inf", outcome.model.weak_convexity_bound());
    s.push("norm_u", outcome.model.conv().norm());
    Ok(s)
}

pub fn cmd_denoise(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let model = load_checkpoint(cfg)?;
    let input: String = cfg.get("input")?;
    let mut y = load_source(&input, cfg.get("size")?)?;
    let noise: f64 = cfg.get("noise")?;
    let mut reference = cfg.opt::<String>("reference")?.map(|r| load_source(&r, y.nrows())).transpose()?;
    if noise > 0.0 {
        reference.get_or_insert_with(|| y.clone());
        y = add_noise(&y, noise, cfg.get("noise_seed")?);
        write_pair(out, "noisy", &y)?;
    }
    let sigma = clamp_sigma(cfg.get("sigma")?, &model)?;
    let opts = SolveOptions { tol: cfg.get("tol")?, max_iters: cfg.get("max_iters")?, ..SolveOptions::default() };
    let (x, report) = prox_denoise(&model, &y, sigma, &opts)?;
    write_pair(out, "denoised", &x)?;
    report.write_csv(csv_file(&out.join("solve.csv"))?)?;
    let mut s = Summary::default();
    s.push("sigma", sigma);
    s.push("iterations", report.iterations);
    s.push("stop", report.stop_reason.as_str());
    if let Some(r) = reference {
        s.push("psnr_input", metrics::psnr(&r, &y)?);
        s.push("psnr", metrics::psnr(&r, &x)?);
        if r.nrows() >= metrics::SSIM_WINDOW && r.ncols() >= metrics::SSIM_WINDOW {
            s.push("ssim", metrics::ssim(&r, &x)?);
        }
    }
    Ok(s)
}

pub fn cmd_reconstruct(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let model = load_checkpoint(cfg)?;
    let problem = Problem::from_config(cfg)?;
    let shape = problem.op.image_shape();
    let truth = cfg.opt::<String>("ground_truth")?.map(|g| load_source(&g, shape.0)).transpose()?;
    if let Some(t) = &truth {
        if t.dim() != shape {
            return Err(Error::Shape(format!("ground truth is {:?}, operator expects {shape:?}", t.dim())));
        }
    }
    let y = match (cfg.opt::<String>("measurements")?, &truth) {
        (Some(path), _) => problem::read_vector_csv(Path::new(&path))?,
        (None, Some(t)) => {
            let y = problem.measure(t, 0)?;
            problem::write_vector_csv(&out.join("measurements.csv"), &y)?;
            y
        }
        (None, None) => return Err(Error::Config("set measurements or ground_truth".into())),
    };
    if y.len() != problem.op.measurement_len() {
        return Err(Error::Shape(format!("{} measurements, operator produces {}", y.len(), problem.op.measurement_len())));
    }
    let x0 = match cfg.opt::<String>("x0")? {
        Some(src) => load_source(&src, shape.0)?,
        None => Array2::zeros(shape),
    };
    let sigma = clamp_sigma(cfg.get("sigma")?, &model)?;
    let lambda: f64 = cfg.get("lambda")?;
    let opts = SolveOptions { tol: cfg.get("tol")?, max_iters: cfg.get("max_iters")?, ..SolveOptions::default() };
    let (x, report) = sagd_solve(&problem.op, &y, lambda, &model, sigma, &x0, &opts)?;
    write_pair(out, "reconstruction", &x)?;
    report.write_csv(csv_file(&out.join("solve.csv"))?)?;
    let baseline = problem.baseline(&y, cfg.get("baseline_lambda")?)?;
    write_pair(out, "baseline", &baseline)?;
    let mut s = Summary::default();
    s.push("lambda", lambda);
    s.push("sigma", sigma);
    s.push("iterations", report.iterations);
    s.push("stop", report.stop_reason.as_str());
    s.push("relative_grad_norm", report.final_grad_norm / report.initial_grad_norm.max(f64::MIN_POSITIVE));
    if let Some(t) = truth {
        s.push("psnr", metrics::psnr(&t, &x)?);
        s.push("ssim", metrics::ssim(&t, &x)?);
        s.push("baseline_psnr", metrics::psnr(&t, &baseline)?);
        s.push("baseline_ssim", metrics::ssim(&t, &baseline)?);
    }
    Ok(s)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Summary> {
    let reference = imageio::read_image(Path::new(&cfg.get::<String>("reference")?))?;
    let candidate = imageio::read_image(Path::new(&cfg.get::<String>("candidate")?))?;
    let mut s = Summary::default();
    s.push("mse", metrics::mse(&reference, &candidate)?);
    s.push("psnr", metrics::psnr(&reference, &candidate)?);
    s.push("ssim", metrics::ssim(&reference, &candidate)?);
    Ok(s)
}

pub fn cmd_tune(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let model = load_checkpoint(cfg)?;
    let problem = Problem::from_config(cfg)?;
    let size = problem.op.image_shape().0;
    let sources: Vec<String> = cfg.list("validation")?;
    if sources.is_empty() {
        return Err(Error::Config("validation needs at least one image".into()));
    }
    let pairs = sources
        .iter()
        .enumerate()
        .map(|(i, src)| {
            let x = load_source(src, size)?;
            let y = problem.measure(&x, i as u64)?;
            Ok((x, y))
        })
        .collect::<Result<Vec<_>>>()?;
    let default_lambda = problem::default_lambda_range(problem.kind);
    let bounds = TuneBounds {
        lambda: (
            cfg.opt("lambda_min")?.unwrap_or(default_lambda.0),
            cfg.opt("lambda_max")?.unwrap_or(default_lambda.1),
        ),
        sigma: (cfg.get("sigma_min")?, cfg.opt("sigma_max")?.unwrap_or(model.sigma_max())),
        grid: cfg.get("grid")?,
        rounds: cfg.get("rounds")?,
    };
    if bounds.sigma.1 > model.sigma_max() {
        return Err(Error::Config(format!("sigma_max exceeds the model's {}", model.sigma_max())));
    }
    let opts = SolveOptions {
        tol: cfg.get("tol")?,
        max_iters: cfg.get("max_iters")?,
        track_objective: false,
        ..SolveOptions::default()
    };
    let op_norm = problem.op.norm_estimate();
    let result = coarse_to_fine(&bounds, |lambda, sigma| {
        let opts = SolveOptions { step_override: Some(1.0 / sagd_lipschitz(op_norm, lambda, &model)), ..opts.clone() };
        let mut total = 0.0;
        for (x, y) in &pairs {
            let x0 = Array2::zeros(x.dim());
            match sagd_solve(&problem.op, y, lambda, &model, sigma, &x0, &opts) {
                Ok((xh, _)) => total += metrics::psnr(x, &xh).unwrap_or(f64::NEG_INFINITY),
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        total / pairs.len() as f64
    })?;
    result.write_csv(csv_file(&out.join("tune.csv"))?)?;
    std::fs::write(out.join("best.txt"), format!("lambda = {}\nsigma = {}\n", result.best.lambda, result.best.sigma))?;
    let mut s = Summary::default();
    s.push("lambda", result.best.lambda);
    s.push("sigma", result.best.sigma);
    s.push("psnr", result.best.score);
    s.push("evaluations", result.history.len());
    Ok(s)
}

/// Channel impulse responses side by side, each rescaled to `[0, 1]`, with a
/// one-pixel gap.
fn filter_tile(model: &WcrrModel) -> Array2<f64> {
    let e = model.conv().stack().impulse_responses();
    let (nc, k, _) = e.dim();
    let mut tile = Array2::zeros((k, nc * (k + 1) - 1));
    for c in 0..nc {
        let f = imageio::normalize_for_display(&e.slice(s![c, .., ..]).to_owned());
        tile.slice_mut(s![.., c * (k + 1)..c * (k + 1) + k]).assign(&f);
    }
    tile
}

pub fn cmd_inspect(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let model = load_checkpoint(cfg)?;
    let samples: usize = cfg.get("samples")?;
    model.conv().stack().write_impulse_csv(csv_file(&out.join("filters.csv"))?)?;
    imageio::write_pgm(&out.join("filters.pgm"), &filter_tile(&model), PgmDepth::Eight)?;
    model.write_profile_csv(csv_file(&out.join("profile.csv"))?, samples)?;
    model.write_alpha_csv(csv_file(&out.join("alpha.csv"))?, samples)?;
    let d = parseval_diagnostic(&model);
    {
        use std::io::Write;
        let mut f = csv_file(&out.join("parseval.csv"))?;
        writeln!(f, "row,col,value")?;
        for ((i, j), v) in d.kernel.indexed_iter() {
            writeln!(f, "{i},{j},{v}")?;
        }
    }
    let w_norm = checkpoint::verify_norm(&model)?;
    let mut s = Summary::default();
    s.push("channels", model.channels());
    s.push("s_inf", model.weak_convexity_bound());
    s.push("mu", model.mu());
    s.push("norm_u", model.conv().norm());
    s.push("norm_w", w_norm);
    s.push("parseval_center", d.center);
    s.push("parseval_deviation", d.deviation);
    s.push("parseval_relative_deviation", d.relative_deviation);
    Ok(s)
}

/// How far `W^T W` is from a multiple of the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsevalDiagnostic {
    /// Kernel of `W^T W`, centered.
    pub kernel: Array2<f64>,
    /// Central tap.
    pub center: f64,
    /// `||K - delta||_F`.
    pub deviation: f64,
    /// `||K - K_center delta||_F / ||K||_F`.
    pub relative_deviation: f64,
}

pub fn parseval_diagnostic(model: &WcrrModel) -> ParsevalDiagnostic {
    let n = model.conv().norm();
    let kernel = model.conv().stack().gram_kernel() / (n * n);
    let c = kernel.nrows() / 2;
    let center = kernel[[c, c]];
    let total: f64 = kernel.iter().map(|v| v * v).sum();
    let off = total - center * center;
    ParsevalDiagnostic {
        deviation: (off + (center - 1.0).powi(2)).sqrt(),
        relative_deviation: if total > 0.0 { (off / total).sqrt() } else { 0.0 },
        center,
        kernel,
    }
}
