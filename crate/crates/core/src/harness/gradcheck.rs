use serde::Serialize;

use super::config::RunConfig;
use crate::data::{Batch, BatchSampler, SamplingPolicy};
use crate::error::{Error, Result};
use crate::models::{Model, ModelKind};

/// Pass threshold for the quadratic, whose central differences are exact up
/// to rounding.
pub const QUADRATIC_TOLERANCE: f64 = 1e-9;
/// Pass threshold for the neural models.
pub const NEURAL_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_STEP: f64 = 1e-5;
/// Central differences have no truncation error on a quadratic, so a wider
/// step only shrinks the rounding error of the summed loss.
pub const QUADRATIC_STEP: f64 = 1e-3;

pub fn default_step(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::NoisyQuadratic => QUADRATIC_STEP,
        _ => DEFAULT_STEP,
    }
}

pub fn tolerance_for(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::NoisyQuadratic => QUADRATIC_TOLERANCE,
        _ => NEURAL_TOLERANCE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub name: String,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `max_j |a_j − n_j| / max(‖a‖∞, ‖n‖∞)`, zero when both are zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / scale
}

/// Compares two gradients block by block. Misaligned inputs fail the check
/// outright with an infinite error.
pub fn compare_gradients(
    names: &[String],
    analytic: &[Vec<f64>],
    numeric: &[Vec<f64>],
    tolerance: f64,
) -> GradCheckReport {
    let aligned = analytic.len() == names.len()
        && numeric.len() == names.len()
        && analytic.iter().zip(numeric).all(|(a, n)| a.len() == n.len());
    let blocks: Vec<BlockError> = names
        .iter()
        .enumerate()
        .map(|(i, name)| BlockError {
            name: name.clone(),
            relative_error: match (aligned, analytic.get(i), numeric.get(i)) {
                (true, Some(a), Some(n)) => relative_error(a, n),
                _ => f64::INFINITY,
            },
        })
        .collect();
    let max_error = blocks.iter().map(|b| b.relative_error).fold(0.0, f64::max);
    GradCheckReport { passed: aligned && max_error <= tolerance, blocks, max_error, tolerance }
}

/// Analytic (noise off) versus central-difference gradient for one model
/// and batch.
pub fn check_model(model: &Model, batch: &Batch, h: f64) -> Result<GradCheckReport> {
    let analytic = model.backward_grad(batch, None)?;
    let numeric = model.finite_diff_grad(batch, h)?;
    let names: Vec<String> = model.params().blocks().iter().map(|b| b.name().to_string()).collect();
    Ok(compare_gradients(&names, &analytic, &numeric, tolerance_for(model.kind())))
}

/// Gradient check for the model a run config describes, at its seeded
/// initialization, on the first `samples` training examples of a seeded
/// shuffle.
pub fn check_grad(config: &RunConfig, samples: usize, h: f64) -> Result<GradCheckReport> {
    config.validate()?;
    if samples == 0 {
        return Err(Error::config("gradient check needs at least one sample"));
    }
    let model = Model::init(config.model.clone(), config.seed)?;
    let splits = config.data.load()?;
    let batch = match splits.train {
        Some(ds) => {
            let mut s = BatchSampler::new(samples.min(ds.len()), config.seed, SamplingPolicy::ShuffleEachEpoch)?;
            s.sample_batch(&ds, 0)?
        }
        None => Batch::virtual_of_size(samples),
    };
    check_model(&model, &batch, h)
}
