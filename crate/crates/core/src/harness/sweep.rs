use std::fs::File;
use std::io::BufWriter;

use serde::Serialize;

use super::config::RunConfig;
use super::train::{run_training, RunMetrics};
use crate::error::{Error, Result};
use crate::schedule::{scale_warmup, sqrt_scale_lr, Warmup};

pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup: Warmup,
    pub metrics: RunMetrics,
}

/// The config for one sweep point: learning rate scaled by `√(b / b0)`,
/// warmup scaled linearly in `b / b0` (a ratio is capped at 1), and outputs
/// in `<output_dir>/b<b>`. Everything else is untouched; in particular
/// epoch-based runs keep their epoch count.
pub fn derive_config(base: &RunConfig, batch_size: usize) -> Result<RunConfig> {
    if batch_size == 0 {
        return Err(Error::config("sweep batch sizes must be positive"));
    }
    let b0 = base.training.batch_size;
    let mut cfg = base.clone();
    cfg.training.batch_size = batch_size;
    cfg.schedule.base_lr = sqrt_scale_lr(base.schedule.base_lr, b0, batch_size);
    cfg.schedule.warmup = match base.schedule.warmup {
        Warmup::Ratio(r) => Warmup::Ratio(scale_warmup(r, b0, batch_size)),
        Warmup::Epochs(e) => Warmup::Epochs(e * batch_size as f64 / b0 as f64),
        Warmup::Steps(0) => Warmup::Steps(0),
        Warmup::Steps(_) => {
            return Err(Error::config("sweeps scale warmup proportionally; give it as a ratio or in epochs"))
        }
    };
    cfg.output_dir = base.output_dir.join(format!("b{batch_size}"));
    Ok(cfg)
}

/// Trains once per batch size and writes a summary table to
/// `<output_dir>/sweep.csv`.
pub fn run_sweep(base: &RunConfig, batch_sizes: &[usize]) -> Result<Vec<SweepEntry>> {
    base.validate()?;
    if batch_sizes.is_empty() {
        return Err(Error::config("sweep needs at least one batch size"));
    }
    let configs = batch_sizes.iter().map(|&b| derive_config(base, b)).collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::with_capacity(configs.len());
    for cfg in configs {
        let metrics = run_training(&cfg)?;
        entries.push(SweepEntry {
            batch_size: cfg.training.batch_size,
            base_lr: cfg.schedule.base_lr,
            warmup: cfg.schedule.warmup,
            metrics,
        });
    }
    std::fs::create_dir_all(&base.output_dir)?;
    let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(base.output_dir.join(SWEEP_CSV))?));
    wtr.write_record([
        "batch_size",
        "base_lr",
        "warmup",
        "total_steps",
        "final_accuracy",
        "final_train_loss",
        "final_grad_norm",
    ])?;
    for e in &entries {
        let warmup = match e.warmup {
            Warmup::Steps(s) => format!("{s} steps"),
            Warmup::Ratio(r) => format!("{r} ratio"),
            Warmup::Epochs(x) => format!("{x} epochs"),
        };
        wtr.write_record([
            e.batch_size.to_string(),
            e.base_lr.to_string(),
            warmup,
            e.metrics.total_steps.to_string(),
            e.metrics.final_accuracy.map_or(String::new(), |a| a.to_string()),
            e.metrics.final_train_loss.to_string(),
            e.metrics.final_grad_norm.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(entries)
}
