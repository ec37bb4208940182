use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::config::{Resolved, RunConfig};
use crate::data::{Batch, BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::models::{Arch, Model};
use crate::optim::{Optimizer, TRACE_CSV_HEADER};
use crate::params::{LayeredParams, NormKind};
use crate::rng::mix;
use crate::schedule::lr_at;

pub const METRICS_CSV: &str = "metrics.csv";
pub const TRUST_RATIO_CSV: &str = "trust_ratio.csv";
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const FINAL_CHECKPOINT: &str = "final.lpv";

pub fn checkpoint_name(step: u64) -> String {
    format!("step_{step:08}.lpv")
}

/// One metric row, describing the state `x_k` after `step = k` updates.
///
/// `train_loss` and the gradient norms are measured on minibatch `k` (the
/// one about to be used for update `k + 1`); for the quadratic they are the
/// exact noiseless objective and gradient. `lr` is the rate for update
/// `k + 1`, or the last rate used at the final row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalPoint {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub eval_accuracy: Option<f64>,
    pub grad_norm: f64,
    pub block_grad_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    /// Accuracy on the full test split at the final step. This is the
    /// primary selection metric; `None` for data-free objectives.
    pub final_accuracy: Option<f64>,
    pub final_train_loss: f64,
    pub final_grad_norm: f64,
    pub initial_grad_norm: f64,
    pub total_steps: u64,
    pub block_names: Vec<String>,
    pub points: Vec<EvalPoint>,
}

fn grad_norms(grads: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let per: Vec<f64> = grads.iter().map(|g| crate::params::block_norm(g, NormKind::L2)).collect();
    let full = per.iter().map(|n| n * n).sum::<f64>().sqrt();
    (full, per)
}

/// Per-step randomness for the quadratic's gradient noise.
fn noise_seed(seed: u64, step: u64) -> u64 {
    mix(mix(seed, 0x6e6f697365), step)
}

struct Source<'a> {
    train: Option<&'a Dataset>,
    sampler: BatchSampler,
    batch_size: usize,
}

impl Source<'_> {
    fn batch(&mut self, step: u64) -> Result<Batch> {
        match self.train {
            Some(ds) => self.sampler.sample_batch(ds, step),
            None => Ok(Batch::virtual_of_size(self.batch_size)),
        }
    }
}

/// Loss, gradient used for the update, and gradient reported in metrics.
type Measured = (f64, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Loss and gradient at the current parameters on minibatch `step`.
fn measure(model: &Model, src: &mut Source<'_>, seed: u64, step: u64) -> Result<Measured> {
    let batch = src.batch(step)?;
    let (loss, grads) = model.loss_and_grad(&batch, Some(noise_seed(seed, step)))?;
    // The quadratic reports the exact gradient; noise only drives updates.
    let report = if matches!(model.arch(), Arch::NoisyQuadratic(_)) {
        model.backward_grad(&batch, None)?
    } else {
        grads.clone()
    };
    Ok((loss, grads, report))
}

fn diverged(loss: f64, grads: &[Vec<f64>], max_loss: Option<f64>) -> bool {
    !loss.is_finite() || max_loss.is_some_and(|m| loss > m) || grads.iter().flatten().any(|g| !g.is_finite())
}

fn write_metrics_header<W: Write>(wtr: &mut csv::Writer<W>, blocks: &[String], with_acc: bool) -> Result<()> {
    let mut header = vec!["step".to_string(), "lr".into(), "train_loss".into()];
    if with_acc {
        header.push("eval_accuracy".into());
    }
    header.push("grad_norm".into());
    header.extend(blocks.iter().map(|b| format!("grad_norm:{b}")));
    wtr.write_record(&header)?;
    Ok(())
}

fn write_metrics_row<W: Write>(wtr: &mut csv::Writer<W>, p: &EvalPoint) -> Result<()> {
    let mut row = vec![p.step.to_string(), p.lr.to_string(), p.train_loss.to_string()];
    if let Some(a) = p.eval_accuracy {
        row.push(a.to_string());
    }
    row.push(p.grad_norm.to_string());
    row.extend(p.block_grad_norms.iter().map(|n| n.to_string()));
    wtr.write_record(&row)?;
    wtr.flush()?;
    Ok(())
}

fn write_resolved(dir: &Path, config: &RunConfig, resolved: &Resolved) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a RunConfig,
        resolved: &'a Resolved,
        library_version: &'a str,
    }
    let text = toml::to_string(&Doc { config, resolved, library_version: env!("CARGO_PKG_VERSION") })
        .map_err(|e| Error::config(e.to_string()))?;
    fs::write(dir.join(RESOLVED_CONFIG), text)?;
    Ok(())
}

/// Builds the model a config describes, before any training.
pub fn initial_model(config: &RunConfig) -> Result<Model> {
    Model::init(config.model.clone(), config.seed)
}

/// Runs `T` steps of sample → gradient → learning rate → update, writing
/// metrics, the optional trust-ratio trace, checkpoints and the resolved
/// config into `config.output_dir`.
///
/// Everything is a function of the config, so two runs with the same config
/// produce byte-identical files. A non-finite (or, if configured, too
/// large) loss or gradient stops the run with `NumericalDivergence`; rows
/// already written stay valid and no non-finite value is ever written.
pub fn run_training(config: &RunConfig) -> Result<RunMetrics> {
    config.validate()?;
    let splits = config.data.load()?;
    let mut resolved = config.resolve(splits.train.as_ref().map(Dataset::len))?;
    resolved.test_samples = splits.test.as_ref().map_or(0, Dataset::len);
    if let (Some(d), Some(train)) = (config.model.input_dim(), splits.train.as_ref()) {
        if train.feature_dim() != d {
            return Err(Error::config(format!(
                "dataset has {} features per sample, model expects {d}",
                train.feature_dim()
            )));
        }
        if train.num_classes() > config.model.classes().unwrap_or(0) {
            return Err(Error::config("dataset has more classes than the model outputs"));
        }
    }

    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    write_resolved(out, config, &resolved)?;

    let mut model = initial_model(config)?;
    let mut opt = Optimizer::new(config.optimizer.clone(), model.params())?;
    let block_names: Vec<String> = model.params().blocks().iter().map(|b| b.name().to_string()).collect();

    let mut metrics = csv::Writer::from_writer(BufWriter::new(File::create(out.join(METRICS_CSV))?));
    write_metrics_header(&mut metrics, &block_names, splits.test.is_some())?;
    let mut trace = if config.training.trace_trust_ratio {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join(TRUST_RATIO_CSV))?));
        w.write_record(TRACE_CSV_HEADER)?;
        Some(w)
    } else {
        None
    };

    let mut src = Source {
        train: splits.train.as_ref(),
        sampler: BatchSampler::new(config.training.batch_size, config.seed, config.training.sampling)?,
        batch_size: config.training.batch_size,
    };
    let total = resolved.total_steps;
    let mut points = Vec::new();
    let mut initial_grad_norm = 0.0;
    let mut last_lr = 0.0;

    for step in 0..=total {
        let (loss, grads, report) = measure(&model, &mut src, config.seed, step)?;
        if diverged(loss, &grads, config.training.max_loss) {
            metrics.flush()?;
            if let Some(t) = trace.as_mut() {
                t.flush()?;
            }
            return Err(Error::NumericalDivergence { step, loss });
        }
        if step == 0 {
            initial_grad_norm = grad_norms(&report).0;
        }
        let lr = if step < total { lr_at(&resolved.schedule, step)? } else { last_lr };

        if step % resolved.eval_every == 0 || step == total {
            let eval_accuracy = splits.test.as_ref().map(|t| model.accuracy(t)).transpose()?;
            let (grad_norm, block_grad_norms) = grad_norms(&report);
            let p = EvalPoint { step, lr, train_loss: loss, eval_accuracy, grad_norm, block_grad_norms };
            write_metrics_row(&mut metrics, &p)?;
            points.push(p);
        }
        if let Some(every) = config.training.checkpoint_every {
            if step % every == 0 {
                model.params().save(out.join(checkpoint_name(step)))?;
            }
        }
        if step == total {
            break;
        }

        let g = model.params().with_values(grads)?;
        let st = match opt.step(model.params_mut(), &g, lr) {
            Ok(st) => st,
            Err(Error::NonFinite { .. }) => {
                metrics.flush()?;
                return Err(Error::NumericalDivergence { step, loss });
            }
            Err(e) => return Err(e),
        };
        if let Some(t) = trace.as_mut() {
            st.write_csv_rows(t)?;
        }
        last_lr = lr;
    }
    metrics.flush()?;
    if let Some(mut t) = trace {
        t.flush()?;
    }
    model.params().save(out.join(FINAL_CHECKPOINT))?;

    let last = points.last().expect("final row always written").clone();
    Ok(RunMetrics {
        final_accuracy: last.eval_accuracy,
        final_train_loss: last.train_loss,
        final_grad_norm: last.grad_norm,
        initial_grad_norm,
        total_steps: total,
        block_names,
        points,
    })
}

/// Loads a checkpoint written by a run of `config`.
pub fn load_checkpoint(config: &RunConfig, path: impl AsRef<Path>) -> Result<Model> {
    Model::with_params(config.model.clone(), LayeredParams::load(path)?)
}
