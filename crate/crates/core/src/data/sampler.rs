use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::rng::{mix, seeded, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPolicy {
    /// A fresh permutation every epoch; the short final batch is dropped.
    #[default]
    ShuffleEachEpoch,
    /// i.i.d. uniform indices for every batch.
    WithReplacement,
}

/// Draws fixed-size batches as a pure function of `(seed, step)`. The most
/// recent epoch permutation is cached, so the sampler has a single owner.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    batch_size: usize,
    seed: u64,
    policy: SamplingPolicy,
    cached: Option<(u64, Vec<usize>)>,
}

impl BatchSampler {
    pub fn new(batch_size: usize, seed: u64, policy: SamplingPolicy) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(Self { batch_size, seed, policy, cached: None })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn policy(&self) -> SamplingPolicy {
        self.policy
    }

    /// Full batches per pass over `n` samples.
    pub fn steps_per_epoch(&self, n: usize) -> u64 {
        (n / self.batch_size) as u64
    }

    /// The permutation used for `epoch`.
    pub fn epoch_permutation(&self, n: usize, epoch: u64) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = seeded(mix(self.seed, epoch), streams::SAMPLER);
        perm.shuffle(&mut rng);
        perm
    }

    /// Sample indices for 0-based batch number `step`.
    pub fn indices(&mut self, n: usize, step: u64) -> Result<Vec<usize>> {
        if self.batch_size > n {
            return Err(Error::BatchTooLarge { batch: self.batch_size, available: n });
        }
        match self.policy {
            SamplingPolicy::ShuffleEachEpoch => {
                let per_epoch = self.steps_per_epoch(n);
                let epoch = step / per_epoch;
                let offset = (step % per_epoch) as usize * self.batch_size;
                if self.cached.as_ref().map(|(e, _)| *e) != Some(epoch) {
                    self.cached = Some((epoch, self.epoch_permutation(n, epoch)));
                }
                let perm = &self.cached.as_ref().expect("cached above").1;
                Ok(perm[offset..offset + self.batch_size].to_vec())
            }
            SamplingPolicy::WithReplacement => {
                let mut rng = seeded(mix(self.seed, step), streams::SAMPLER + 100);
                Ok((0..self.batch_size).map(|_| rng.random_range(0..n)).collect())
            }
        }
    }

    pub fn sample_batch(&mut self, dataset: &Dataset, step: u64) -> Result<Batch> {
        let idx = self.indices(dataset.len(), step)?;
        Ok(dataset.gather(&idx))
    }
}
