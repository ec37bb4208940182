use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use lamb_core::data::synthetic::write_digits_dir;
use lamb_core::harness::protocol::{run_protocol, Mode, ProtocolSpec};
use lamb_core::harness::{
    check_grad, default_step, run_sweep, run_theorem_check, run_training, RunConfig, TheoremOptimizer, TheoremSettings,
};
use lamb_core::schedule::write_schedule_csv;
use lamb_core::{Error, Result};

#[derive(Parser)]
#[command(name = "lamb", version, about = "Layerwise adaptive optimizers: training and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run described by a TOML config.
    Train {
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Train once per batch size with square-root LR and linear warmup scaling.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        batches: Vec<usize>,
    },
    /// Convergence criterion versus horizon on the noisy quadratic.
    TheoremCheck {
        #[arg(long)]
        opt: TheoremOptimizer,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        grid: Vec<u64>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic versus central-difference gradients at initialization.
    CheckGrad {
        config: PathBuf,
        #[arg(long, default_value_t = 4)]
        samples: usize,
        /// Finite-difference step; 1e-3 for the quadratic, 1e-5 otherwise.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Print the learning rate for every step as `step,lr` CSV.
    DumpSchedule { config: PathBuf },
    /// Learning-rate grid protocol over several optimizers and seeds.
    Protocol {
        spec: PathBuf,
        /// Report from cached runs only; fail if any are missing.
        #[arg(long)]
        cache_only: bool,
    },
    /// Write synthetic 28x28 digit IDX files for offline runs.
    GenSynthetic {
        dir: PathBuf,
        #[arg(long, default_value_t = 2000)]
        train: usize,
        #[arg(long, default_value_t = 500)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print_json(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("json values serialize"));
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { config, output_dir } => {
            let mut cfg = RunConfig::from_file(&config)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let m = run_training(&cfg)?;
            print_json(json!({
                "output_dir": cfg.output_dir,
                "final_accuracy": m.final_accuracy,
                "final_train_loss": m.final_train_loss,
                "final_grad_norm": m.final_grad_norm,
                "initial_grad_norm": m.initial_grad_norm,
                "total_steps": m.total_steps,
            }));
        }
        Command::Sweep { config, batches } => {
            let cfg = RunConfig::from_file(&config)?;
            let entries = run_sweep(&cfg, &batches)?;
            let rows: Vec<_> = entries
                .iter()
                .map(|e| {
                    json!({
                        "batch_size": e.batch_size,
                        "base_lr": e.base_lr,
                        "final_accuracy": e.metrics.final_accuracy,
                        "final_train_loss": e.metrics.final_train_loss,
                    })
                })
                .collect();
            print_json(json!({ "runs": rows }));
        }
        Command::TheoremCheck { opt, grid, seeds, out } => {
            let settings = TheoremSettings { seeds, ..TheoremSettings::default() };
            let table = run_theorem_check(opt, &grid, &settings)?;
            match out {
                Some(path) => table.write_csv(std::fs::File::create(path)?)?,
                None => table.write_csv(io::stdout().lock())?,
            }
        }
        Command::CheckGrad { config, samples, h } => {
            let cfg = RunConfig::from_file(&config)?;
            let h = h.unwrap_or_else(|| default_step(cfg.model.kind()));
            let report = check_grad(&cfg, samples, h)?;
            print_json(serde_json::to_value(&report).expect("report serializes"));
            return Ok(report.passed);
        }
        Command::DumpSchedule { config } => {
            let cfg = RunConfig::from_file(&config)?;
            let spec = cfg.resolved_schedule()?;
            let mut out = io::stdout().lock();
            write_schedule_csv(&spec, &mut out)?;
            out.flush()?;
        }
        Command::Protocol { spec, cache_only } => {
            let spec = ProtocolSpec::from_file(&spec)?;
            let mut announce = |c: &RunConfig| {
                eprintln!(
                    "running {} lr={} seed={} -> {}",
                    c.optimizer.kind,
                    c.schedule.base_lr,
                    c.seed,
                    c.output_dir.display()
                );
            };
            let mode = if cache_only { Mode::CacheOnly } else { Mode::Run(&mut announce) };
            let report = run_protocol(&spec, mode)?;
            report.write_csv(io::stdout().lock())?;
        }
        Command::GenSynthetic { dir, train, test, seed } => {
            write_digits_dir(&dir, train, test, seed)?;
            print_json(json!({ "dir": dir, "train": train, "test": test }));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let detail = match &e {
                Error::NumericalDivergence { step, loss } => json!({ "step": step, "loss": loss.to_string() }),
                _ => json!(null),
            };
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string(), "detail": detail }));
            ExitCode::from(2)
        }
    }
}
