//! Learning-rate grid protocol: for each optimizer, pick the rate with the
//! best final test accuracy at one tuning seed, then rerun that rate over a
//! seed set and report the mean accuracy.
//!
//! Every run is cached under `<cache_dir>/<hash>/` where the hash covers
//! the run config (minus its output directory) and the library version, so
//! an interrupted protocol resumes and repeated reports are free.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::train::run_training;
use crate::error::{Error, Result};
use crate::optim::{OptimizerConfig, OptimizerKind};

const OUTCOME_FILE: &str = "outcome.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    /// Template run; optimizer kind, learning rate, seed and output
    /// directory are overridden per run.
    pub base: RunConfig,
    pub optimizers: Vec<OptimizerKind>,
    pub lr_grid: Vec<f64>,
    pub tune_seed: u64,
    /// Evaluation seeds; the tuning seed may be among them, in which case
    /// its run is reused.
    pub seeds: Vec<u64>,
    pub cache_dir: PathBuf,
}

/// Result of one cached run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Finished { accuracy: f64, train_loss: f64 },
    Diverged { step: u64 },
}

impl Outcome {
    pub fn accuracy(&self) -> Option<f64> {
        match self {
            Outcome::Finished { accuracy, .. } => Some(*accuracy),
            Outcome::Diverged { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerResult {
    pub kind: OptimizerKind,
    pub tuning: Vec<(f64, Outcome)>,
    pub best_lr: Option<f64>,
    pub seed_accuracies: Vec<(u64, f64)>,
    pub mean_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolReport {
    pub results: Vec<OptimizerResult>,
}

impl ProtocolReport {
    pub fn get(&self, kind: OptimizerKind) -> Option<&OptimizerResult> {
        self.results.iter().find(|r| r.kind == kind)
    }
}

impl ProtocolSpec {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut spec: Self = toml::from_str(&text).map_err(|e| Error::config(e.to_string()))?;
        let base_dir = path.parent().unwrap_or(Path::new("."));
        if let super::DataSpec::Mnist { dir } = &mut spec.base.data {
            if dir.is_relative() {
                *dir = base_dir.join(&*dir);
            }
        }
        if spec.cache_dir.is_relative() {
            spec.cache_dir = base_dir.join(&spec.cache_dir);
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.optimizers.is_empty() || self.lr_grid.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("protocol needs optimizers, a learning-rate grid and seeds"));
        }
        if self.lr_grid.iter().any(|lr| !(*lr > 0.0 && lr.is_finite())) {
            return Err(Error::config("learning rates must be positive"));
        }
        self.base.validate()
    }

    /// The config for one grid point. Optimizer hyperparameters other than
    /// the kind are taken from the template.
    pub fn run_config(&self, kind: OptimizerKind, lr: f64, seed: u64) -> Result<RunConfig> {
        let mut cfg = self.base.clone();
        cfg.optimizer = OptimizerConfig { kind, ..self.base.optimizer.clone() };
        cfg.schedule.base_lr = lr;
        cfg.seed = seed;
        // The key names the dataset kind, not where its files live, so the
        // same spec reached through different paths shares one cache.
        let mut keyed = cfg.clone();
        keyed.output_dir = PathBuf::new();
        if let super::DataSpec::Mnist { dir } = &mut keyed.data {
            *dir = PathBuf::from("mnist");
        }
        cfg.output_dir = self.cache_dir.join(cache_key(&keyed)?);
        Ok(cfg)
    }

    /// The cached outcome of a run, if present.
    pub fn cached(&self, kind: OptimizerKind, lr: f64, seed: u64) -> Result<Option<Outcome>> {
        let cfg = self.run_config(kind, lr, seed)?;
        read_outcome(&cfg.output_dir)
    }
}

fn cache_key(cfg_without_dir: &RunConfig) -> Result<String> {
    let text = cfg_without_dir.to_toml_string()?;
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update(b"\n");
    h.update(text.as_bytes());
    Ok(hex::encode(&h.finalize()[..12]))
}

fn read_outcome(dir: &Path) -> Result<Option<Outcome>> {
    let path = dir.join(OUTCOME_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map(Some).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

/// Runs (or loads) one grid point.
pub fn run_cached(cfg: &RunConfig) -> Result<Outcome> {
    if let Some(o) = read_outcome(&cfg.output_dir)? {
        return Ok(o);
    }
    let outcome = match run_training(cfg) {
        Ok(m) => Outcome::Finished {
            accuracy: m.final_accuracy.ok_or_else(|| Error::config("protocol runs need an evaluation split"))?,
            train_loss: m.final_train_loss,
        },
        Err(Error::NumericalDivergence { step, .. }) => Outcome::Diverged { step },
        Err(e) => return Err(e),
    };
    let json = serde_json::to_string_pretty(&outcome).map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::write(cfg.output_dir.join(OUTCOME_FILE), json)?;
    Ok(outcome)
}

/// How the protocol reaches a run that is not cached yet.
pub enum Mode<'a> {
    /// Train anything missing. The callback sees each config before it runs.
    Run(&'a mut dyn FnMut(&RunConfig)),
    /// Never train; missing runs are reported as an error.
    CacheOnly,
}

fn obtain(spec: &ProtocolSpec, mode: &mut Mode<'_>, kind: OptimizerKind, lr: f64, seed: u64) -> Result<Outcome> {
    let cfg = spec.run_config(kind, lr, seed)?;
    match mode {
        Mode::Run(cb) => {
            if read_outcome(&cfg.output_dir)?.is_none() {
                cb(&cfg);
            }
            run_cached(&cfg)
        }
        Mode::CacheOnly => read_outcome(&cfg.output_dir)?.ok_or_else(|| {
            Error::DataLoad(format!(
                "protocol run {} lr={lr} seed={seed} is not cached in {}",
                kind.name(),
                cfg.output_dir.display()
            ))
        }),
    }
}

pub fn run_protocol(spec: &ProtocolSpec, mut mode: Mode<'_>) -> Result<ProtocolReport> {
    spec.validate()?;
    let mut results = Vec::new();
    for &kind in &spec.optimizers {
        let mut tuning = Vec::new();
        for &lr in &spec.lr_grid {
            tuning.push((lr, obtain(spec, &mut mode, kind, lr, spec.tune_seed)?));
        }
        // Highest accuracy wins; ties go to the smaller rate.
        let best_lr = tuning
            .iter()
            .filter_map(|(lr, o)| o.accuracy().map(|a| (*lr, a)))
            .fold(None, |best: Option<(f64, f64)>, (lr, a)| match best {
                Some((_, ba)) if ba >= a => best,
                _ => Some((lr, a)),
            })
            .map(|(lr, _)| lr);
        let mut seed_accuracies = Vec::new();
        if let Some(lr) = best_lr {
            for &seed in &spec.seeds {
                if let Some(a) = obtain(spec, &mut mode, kind, lr, seed)?.accuracy() {
                    seed_accuracies.push((seed, a));
                }
            }
        }
        // A seed that diverges at the tuned rate leaves the mean undefined.
        let mean_accuracy = (best_lr.is_some() && seed_accuracies.len() == spec.seeds.len())
            .then(|| seed_accuracies.iter().map(|(_, a)| a).sum::<f64>() / seed_accuracies.len() as f64);
        results.push(OptimizerResult { kind, tuning, best_lr, seed_accuracies, mean_accuracy });
    }
    Ok(ProtocolReport { results })
}

impl ProtocolReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["optimizer", "best_lr", "mean_accuracy", "seed_accuracies", "tuning"])?;
        for r in &self.results {
            let seeds: Vec<String> = r.seed_accuracies.iter().map(|(s, a)| format!("{s}:{a}")).collect();
            let tuning: Vec<String> = r
                .tuning
                .iter()
                .map(|(lr, o)| match o {
                    Outcome::Finished { accuracy, .. } => format!("{lr}:{accuracy}"),
                    Outcome::Diverged { step } => format!("{lr}:diverged@{step}"),
                })
                .collect();
            wtr.write_record([
                r.kind.name().to_string(),
                r.best_lr.map_or(String::new(), |l| l.to_string()),
                r.mean_accuracy.map_or(String::new(), |a| a.to_string()),
                seeds.join(" "),
                tuning.join(" "),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
