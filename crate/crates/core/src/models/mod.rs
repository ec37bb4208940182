//! Small differentiable models with hand-written backward passes.
//!
//! Losses are batch means. Weight decay is the optimizer's job and never
//! appears in a model loss.

mod dense;
mod layers;
mod lenet;
mod quadratic;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use lenet::LeNetArch;
pub use quadratic::NoisyQuadraticSpec;

use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::params::{LayeredParams, ParamBlock};
use crate::rng::{seeded, streams};

/// Samples per forward/backward shard. Shard gradients are accumulated in
/// order, so results do not depend on batch layout beyond sample order.
pub(crate) const SHARD: usize = 128;

pub(crate) struct LossGrad {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NoisyQuadratic,
    LogisticRegression,
    Mlp,
    LeNet,
}

/// Architecture of a model; the parameter layout follows from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    NoisyQuadratic(NoisyQuadraticSpec),
    LogisticRegression {
        input_dim: usize,
        classes: usize,
    },
    /// Layer widths from input to classes; ReLU between layers.
    Mlp {
        sizes: Vec<usize>,
    },
    #[serde(rename = "lenet")]
    LeNet(LeNetArch),
}

impl Arch {
    pub fn kind(&self) -> ModelKind {
        match self {
            Arch::NoisyQuadratic(_) => ModelKind::NoisyQuadratic,
            Arch::LogisticRegression { .. } => ModelKind::LogisticRegression,
            Arch::Mlp { .. } => ModelKind::Mlp,
            Arch::LeNet(_) => ModelKind::LeNet,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Arch::NoisyQuadratic(q) => q.validate(),
            Arch::LogisticRegression { input_dim, classes } => {
                if *input_dim == 0 || *classes < 2 {
                    return Err(Error::config("logistic regression needs input_dim > 0 and classes >= 2"));
                }
                Ok(())
            }
            Arch::Mlp { sizes } => {
                if sizes.len() < 2 || sizes.contains(&0) || *sizes.last().unwrap() < 2 {
                    return Err(Error::config(format!("invalid MLP sizes {sizes:?}")));
                }
                Ok(())
            }
            Arch::LeNet(a) => a.validate(),
        }
    }

    /// Input features per sample; `None` for data-free objectives.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Arch::NoisyQuadratic(_) => None,
            Arch::LogisticRegression { input_dim, .. } => Some(*input_dim),
            Arch::Mlp { sizes } => Some(sizes[0]),
            Arch::LeNet(a) => Some(a.in_side * a.in_side),
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match self {
            Arch::NoisyQuadratic(_) => None,
            Arch::LogisticRegression { classes, .. } => Some(*classes),
            Arch::Mlp { sizes } => sizes.last().copied(),
            Arch::LeNet(a) => Some(a.classes),
        }
    }

    fn dense_sizes(&self) -> Option<Vec<usize>> {
        match self {
            Arch::LogisticRegression { input_dim, classes } => Some(vec![*input_dim, *classes]),
            Arch::Mlp { sizes } => Some(sizes.clone()),
            _ => None,
        }
    }

    /// `(name, shape, fan_in)` per block for the neural models.
    fn neural_blocks(&self) -> Vec<(String, Vec<usize>, usize)> {
        match self {
            Arch::LeNet(a) => a.blocks().into_iter().map(|(n, s, f)| (n.to_string(), s, f)).collect(),
            Arch::LogisticRegression { input_dim, classes } => vec![
                ("linear.weight".into(), vec![*classes, *input_dim], *input_dim),
                ("linear.bias".into(), vec![*classes], *input_dim),
            ],
            Arch::Mlp { sizes } => sizes
                .windows(2)
                .enumerate()
                .flat_map(|(l, w)| {
                    [
                        (format!("fc{}.weight", l + 1), vec![w[1], w[0]], w[0]),
                        (format!("fc{}.bias", l + 1), vec![w[1]], w[0]),
                    ]
                })
                .collect(),
            Arch::NoisyQuadratic(_) => Vec::new(),
        }
    }
}

/// A model: architecture plus its parameters. Gradient computation borrows
/// the model immutably; optimizers update `params_mut()` between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Arch,
    params: LayeredParams,
}

impl Model {
    /// Seeded initialization. Neural weights are uniform in
    /// `±√(6 / fan_in)` with zero biases; the quadratic starts at
    /// `x* + init_offset`.
    pub fn init(arch: Arch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let params = match &arch {
            Arch::NoisyQuadratic(q) => q.init()?,
            _ => {
                let mut rng = seeded(seed, streams::INIT);
                let blocks = arch
                    .neural_blocks()
                    .into_iter()
                    .map(|(name, shape, fan_in)| {
                        let len = shape.iter().product();
                        let values = if name.ends_with(".bias") {
                            vec![0.0; len]
                        } else {
                            let bound = (6.0 / fan_in as f64).sqrt();
                            (0..len).map(|_| rng.random_range(-bound..bound)).collect()
                        };
                        ParamBlock::new(name, shape, values)
                    })
                    .collect::<Result<Vec<_>>>()?;
                LayeredParams::new(blocks)?
            }
        };
        Ok(Self { arch, params })
    }

    /// Wraps existing parameters, checking the layout against `arch`.
    pub fn with_params(arch: Arch, params: LayeredParams) -> Result<Self> {
        let template = Self::init(arch, 0)?;
        template.params.check_aligned(&params)?;
        Ok(Self { arch: template.arch, params })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind()
    }

    pub fn params(&self) -> &LayeredParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayeredParams {
        &mut self.params
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.size == 0 {
            return Err(Error::shape("empty batch"));
        }
        let (Some(d), Some(c)) = (self.arch.input_dim(), self.arch.classes()) else {
            return Ok(());
        };
        if batch.input_dim != d || batch.inputs.len() != d * batch.size || batch.labels.len() != batch.size {
            return Err(Error::shape(format!(
                "batch of {} x {} features ({} labels) does not fit model input {d}",
                batch.size,
                batch.input_dim,
                batch.labels.len()
            )));
        }
        if let Some(l) = batch.labels.iter().find(|&&l| l >= c) {
            return Err(Error::shape(format!("label {l} outside [0, {c})")));
        }
        Ok(())
    }

    fn loss_grad(&self, params: &LayeredParams, batch: &Batch, want_grad: bool, noise_seed: Option<u64>) -> LossGrad {
        match &self.arch {
            Arch::NoisyQuadratic(q) => LossGrad {
                loss: q.loss(params),
                grads: if want_grad { q.grad(params, batch.size, noise_seed) } else { Vec::new() },
            },
            Arch::LeNet(a) => lenet::loss_grad(a, params, batch, want_grad),
            arch => dense::loss_grad(params, &arch.dense_sizes().expect("dense arch"), batch, want_grad),
        }
    }

    /// Mean loss over the batch. The quadratic ignores batch contents and
    /// returns the noiseless objective.
    pub fn forward_loss(&self, batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        Ok(self.loss_grad(&self.params, batch, false, None).loss)
    }

    /// Gradient blocks aligned with `params()`. `noise_seed` only affects
    /// the quadratic; `None` gives the exact gradient.
    pub fn backward_grad(&self, batch: &Batch, noise_seed: Option<u64>) -> Result<Vec<Vec<f64>>> {
        Ok(self.loss_and_grad(batch, noise_seed)?.1)
    }

    /// Loss and gradient from one pass.
    pub fn loss_and_grad(&self, batch: &Batch, noise_seed: Option<u64>) -> Result<(f64, Vec<Vec<f64>>)> {
        self.check_batch(batch)?;
        let lg = self.loss_grad(&self.params, batch, true, noise_seed);
        Ok((lg.loss, lg.grads))
    }

    /// Central differences `(f(x+h·e) − f(x−h·e)) / 2h` per coordinate.
    pub fn finite_diff_grad(&self, batch: &Batch, h: f64) -> Result<Vec<Vec<f64>>> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::config(format!("finite-difference step must be > 0, got {h}")));
        }
        self.check_batch(batch)?;
        let mut probe = self.params.clone();
        let mut out = Vec::with_capacity(probe.num_blocks());
        for b in 0..probe.num_blocks() {
            let mut g = Vec::with_capacity(probe.blocks()[b].len());
            for j in 0..probe.blocks()[b].len() {
                let orig = probe.blocks()[b].values()[j];
                probe.blocks_mut()[b].values_mut()[j] = orig + h;
                let plus = self.loss_grad(&probe, batch, false, None).loss;
                probe.blocks_mut()[b].values_mut()[j] = orig - h;
                let minus = self.loss_grad(&probe, batch, false, None).loss;
                probe.blocks_mut()[b].values_mut()[j] = orig;
                g.push((plus - minus) / (2.0 * h));
            }
            out.push(g);
        }
        Ok(out)
    }

    /// Predicted classes for each row of a dataset.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<usize>> {
        let Some(d) = self.arch.input_dim() else {
            return Err(Error::config("model has no inputs to predict from"));
        };
        if data.feature_dim() != d {
            return Err(Error::shape(format!("dataset has {} features, model expects {d}", data.feature_dim())));
        }
        let classes = self.arch.classes().expect("classifier");
        let mut preds = Vec::with_capacity(data.len());
        for start in (0..data.len()).step_by(SHARD) {
            let n = SHARD.min(data.len() - start);
            let x = &data.features()[start * d..(start + n) * d];
            let logits = match &self.arch {
                Arch::LeNet(a) => lenet::logits(a, &self.params, x, n),
                arch => dense::logits(&self.params, &arch.dense_sizes().expect("dense arch"), x, n),
            };
            preds.extend(layers::argmax_rows(&logits, classes));
        }
        Ok(preds)
    }

    /// Fraction of correctly classified samples over the whole dataset.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::DataLoad("cannot evaluate on an empty dataset".into()));
        }
        let preds = self.predict(data)?;
        let correct = preds.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
        Ok(correct as f64 / data.len() as f64)
    }
}
