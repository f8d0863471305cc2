use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wcrr::cli;
use wcrr::error::Error;

#[derive(Parser)]
#[command(name = "wcrr", version, about = "Weakly convex ridge regularizers for denoising and linear inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a regularizer on image patches
    Train(RunArgs),
    /// Denoise an image with the proximal operator
    Denoise(RunArgs),
    /// Solve an MRI, CT, dense or identity reconstruction problem
    Reconstruct(RunArgs),
    /// PSNR and SSIM of a candidate against a reference image
    Eval(RunArgs),
    /// Pick (lambda, sigma) on a validation set by coarse-to-fine search
    Tune(RunArgs),
    /// Dump filters, profiles and norm diagnostics of a checkpoint
    Inspect(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` configuration file
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Print the accepted keys with their defaults and exit
    #[arg(long)]
    keys: bool,
    /// Overrides as `--key value` or `--key=value`
    #[arg(num_args = 0.., allow_hyphen_values = true, trailing_var_arg = true, value_name = "--KEY VALUE")]
    settings: Vec<String>,
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::Shape(_) => "shape",
        Error::Infeasible(_) => "infeasible",
        Error::NonFinite(_) => "non_finite",
        Error::Config(_) => "config",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let parsed = Cli::parse();
    let (name, args) = match &parsed.command {
        Command::Train(a) => ("train", a),
        Command::Denoise(a) => ("denoise", a),
        Command::Reconstruct(a) => ("reconstruct", a),
        Command::Eval(a) => ("eval", a),
        Command::Tune(a) => ("tune", a),
        Command::Inspect(a) => ("inspect", a),
    };
    if args.keys {
        for k in cli::schema(name).expect("known command") {
            println!("{} = {}", k.key, k.default);
        }
        return ExitCode::SUCCESS;
    }
    match cli::run(name, args.config.as_deref(), &args.settings) {
        Ok(summary) => {
            print!("{}", summary.to_text());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} command={name} message={msg:?}", kind(&e));
            ExitCode::from(2)
        }
    }
}
