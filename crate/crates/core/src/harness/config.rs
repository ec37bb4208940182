use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::synthetic::{self, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS};
use crate::data::{load_mnist_idx, Dataset, SamplingPolicy};
use crate::error::{Error, Result};
use crate::models::Arch;
use crate::optim::OptimizerConfig;
use crate::schedule::{Decay, ScheduleSpec, Warmup};

/// A complete, self-contained description of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: Arch,
    #[serde(default)]
    pub data: DataSpec,
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleConfig,
    pub training: TrainingSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// No dataset: batches only carry their size. For the quadratic.
    #[default]
    None,
    /// A directory holding the four standard MNIST IDX files.
    Mnist { dir: PathBuf },
    /// Generated 28x28 digits, built in memory from `data_seed`.
    SyntheticDigits {
        n_train: usize,
        n_test: usize,
        #[serde(default)]
        data_seed: u64,
    },
    /// Gaussian class clusters.
    Gaussian {
        n_train: usize,
        n_test: usize,
        dim: usize,
        classes: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default)]
        data_seed: u64,
    },
}

fn default_separation() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    #[serde(default)]
    pub warmup: Warmup,
    #[serde(default)]
    pub decay: Decay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSpec {
    pub batch_size: usize,
    /// Exactly one of `epochs` and `total_steps` must be set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<u64>,
    #[serde(default)]
    pub sampling: SamplingPolicy,
    /// Steps between metric rows; defaults to one epoch, or a tenth of the
    /// run without a dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<u64>,
    #[serde(default)]
    pub trace_trust_ratio: bool,
    /// Steps between parameter checkpoints; the final state is always saved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<u64>,
    /// Treat a training loss above this as divergence, in addition to
    /// non-finite values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_loss: Option<f64>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Reads a config file. Relative data paths are taken relative to the
    /// file's directory; a relative `output_dir` stays relative to the
    /// working directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let DataSpec::Mnist { dir } = &mut cfg.data {
            if dir.is_relative() {
                if let Some(parent) = path.parent() {
                    *dir = parent.join(&*dir);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Static checks that need no I/O beyond file existence.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        let t = &self.training;
        if t.batch_size == 0 {
            return Err(Error::config("training.batch_size must be positive"));
        }
        match (t.epochs, t.total_steps) {
            (Some(0), _) | (_, Some(0)) => return Err(Error::config("training length must be positive")),
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::config("set exactly one of training.epochs and training.total_steps"))
            }
            (Some(_), None) if matches!(self.data, DataSpec::None) => {
                return Err(Error::config("epochs need a dataset; use training.total_steps"))
            }
            _ => {}
        }
        if t.eval_every == Some(0) || t.checkpoint_every == Some(0) {
            return Err(Error::config("eval_every and checkpoint_every must be positive"));
        }
        if let Some(m) = t.max_loss {
            if !(m > 0.0) {
                return Err(Error::config("max_loss must be positive"));
            }
        }
        if !(self.schedule.base_lr >= 0.0 && self.schedule.base_lr.is_finite()) {
            return Err(Error::config("schedule.base_lr must be finite and >= 0"));
        }
        let needs_data = self.model.input_dim().is_some();
        match (&self.data, needs_data) {
            (DataSpec::None, true) => return Err(Error::config("this model needs a [data] section")),
            (DataSpec::None, false) => {}
            (_, false) => return Err(Error::config("the quadratic model takes no dataset")),
            (DataSpec::Mnist { dir }, true) => {
                for name in [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS] {
                    let p = dir.join(name);
                    if !p.is_file() {
                        return Err(Error::DataLoad(format!("missing {}", p.display())));
                    }
                }
            }
            (DataSpec::SyntheticDigits { n_train, n_test, .. }, true)
            | (DataSpec::Gaussian { n_train, n_test, .. }, true) => {
                if *n_train == 0 || *n_test == 0 {
                    return Err(Error::config("synthetic splits must be non-empty"));
                }
            }
        }
        Ok(())
    }
}

/// Train and test splits; both `None` for data-free models.
pub(crate) struct Splits {
    pub train: Option<Dataset>,
    pub test: Option<Dataset>,
}

impl DataSpec {
    pub(crate) fn load(&self) -> Result<Splits> {
        let (train, test) = match self {
            DataSpec::None => return Ok(Splits { train: None, test: None }),
            DataSpec::Mnist { dir } => (
                load_mnist_idx(dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS))?,
                load_mnist_idx(dir.join(TEST_IMAGES), dir.join(TEST_LABELS))?,
            ),
            DataSpec::SyntheticDigits { n_train, n_test, data_seed } => {
                let to_ds = |(img, lbl): (crate::data::IdxImages, Vec<u8>)| {
                    Dataset::new(
                        img.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
                        vec![img.rows, img.cols],
                        lbl.into_iter().map(usize::from).collect(),
                        10,
                    )
                };
                (to_ds(synthetic::digits(*n_train, *data_seed, 0))?, to_ds(synthetic::digits(*n_test, *data_seed, 1))?)
            }
            DataSpec::Gaussian { n_train, n_test, dim, classes, separation, data_seed } => {
                // One draw split in two keeps train and test on the same means.
                let all = synthetic::gaussian_classes(n_train + n_test, *dim, *classes, *separation, *data_seed)?;
                (all.range(0, *n_train)?, all.range(*n_train, n_train + n_test)?)
            }
        };
        Ok(Splits { train: Some(train), test: Some(test) })
    }
}

/// Everything derived from a config before the first step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub total_steps: u64,
    /// Zero when there is no dataset.
    pub steps_per_epoch: u64,
    pub eval_every: u64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub schedule: ScheduleSpec,
}

impl RunConfig {
    /// The learning-rate schedule a run of this config would follow.
    pub fn resolved_schedule(&self) -> Result<ScheduleSpec> {
        self.validate()?;
        let splits = self.data.load()?;
        Ok(self.resolve(splits.train.as_ref().map(Dataset::len))?.schedule)
    }

    pub(crate) fn resolve(&self, train_len: Option<usize>) -> Result<Resolved> {
        let t = &self.training;
        let steps_per_epoch = match train_len {
            Some(n) => {
                if t.batch_size > n {
                    return Err(Error::BatchTooLarge { batch: t.batch_size, available: n });
                }
                (n / t.batch_size) as u64
            }
            None => 0,
        };
        let total_steps = match (t.epochs, t.total_steps) {
            (Some(e), None) => e * steps_per_epoch,
            (None, Some(s)) => s,
            _ => unreachable!("validated"),
        };
        let warmup_steps = self.schedule.warmup.to_steps(total_steps, steps_per_epoch)?;
        let schedule = ScheduleSpec {
            base_lr: self.schedule.base_lr,
            total_steps,
            warmup_steps,
            decay: self.schedule.decay.clone(),
            stages: Vec::new(),
        }
        .validated()?;
        let eval_every =
            t.eval_every.unwrap_or(if steps_per_epoch > 0 { steps_per_epoch } else { (total_steps / 10).max(1) });
        Ok(Resolved {
            total_steps,
            steps_per_epoch,
            eval_every,
            train_samples: train_len.unwrap_or(0),
            test_samples: 0,
            schedule,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = r#"
seed = 3
output_dir = "runs/q"

[model]
kind = "noisy_quadratic"
dims = [2, 3]
lipschitz = [1.0, 10.0]
sigma = [0.0, 0.0]

[optimizer]
kind = "lamb"
weight_decay = 0.0

[schedule]
base_lr = 0.05
warmup = { ratio = 0.1 }
decay = { kind = "polynomial", power = 1.0 }

[training]
batch_size = 8
total_steps = 100
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml_str(QUAD).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.optimizer.beta1, 0.9);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        let r = cfg.resolve(None).unwrap();
        assert_eq!((r.total_steps, r.schedule.warmup_steps, r.eval_every), (100, 10, 10));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_toml_str(&QUAD.replace("seed = 3\n", "")).is_err());
        assert!(RunConfig::from_toml_str(&QUAD.replace("batch_size", "batch")).is_err());
        let both = QUAD.replace("total_steps = 100", "total_steps = 100\nepochs = 2");
        assert!(RunConfig::from_toml_str(&both).unwrap().validate().is_err());
        let mnist = QUAD.replace("[optimizer]", "[data]\nsource = \"mnist\"\ndir = \"/nonexistent\"\n\n[optimizer]");
        assert!(matches!(RunConfig::from_toml_str(&mnist).unwrap().validate(), Err(Error::ConfigInvalid(_))));
    }
}
