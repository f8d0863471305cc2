// Trains the laptop-scale regularizer on synthetic dead-leaves patches and
// writes a checkpoint. Usage: train_desk [checkpoint path] [steps]
use std::path::PathBuf;

use wcrr::cli::checkpoint;
use wcrr::data::PatchDataset;
use wcrr::training::{train_with, TrainConfig};

fn main() -> wcrr::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| "desk.wcrr".into()));
    let steps = args.next().map_or(500, |s| s.parse().expect("steps must be an integer"));

    let dataset = PatchDataset::dead_leaves(42, 64, 16, 8, 1000)?;
    let config = TrainConfig { steps, ..TrainConfig::desk() };
    println!("{} patches, {} steps", dataset.len(), config.steps);
    let outcome = train_with(&dataset, &config, |row, _| {
        if row.step % 50 == 0 {
            println!("step {:>4} mean abs error {:.4e} mu {:.3}", row.step, row.mean_abs_error, row.mu);
        }
        Ok(())
    })?;
    checkpoint::save(&outcome.model, &path)?;
    println!("saved {}", path.display());
    Ok(())
}
