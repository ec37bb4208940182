//! Datasets, IDX files and seeded minibatch sampling.

mod idx;
mod sampler;
pub mod synthetic;

pub use idx::{
    load_mnist_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IdxImages, IMAGES_MAGIC,
    LABELS_MAGIC,
};
pub use sampler::{BatchSampler, SamplingPolicy};

use crate::error::{Error, Result};

/// Dense features with integer labels. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    feature_shape: Vec<usize>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, feature_shape: Vec<usize>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let dim: usize = feature_shape.iter().product();
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::DataLoad(format!(
                "{} features do not split into {} samples of shape {feature_shape:?}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::DataLoad(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self { features, feature_shape, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_shape.iter().product()
    }

    pub fn feature_shape(&self) -> &[usize] {
        &self.feature_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.feature_dim();
        &self.features[i * d..(i + 1) * d]
    }

    /// Gathers the given sample indices into a batch.
    pub fn gather(&self, indices: &[usize]) -> Batch {
        let d = self.feature_dim();
        let mut inputs = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Batch { inputs, input_dim: d, labels, size: indices.len() }
    }

    /// Contiguous range `[start, end)` as a batch.
    pub fn slice(&self, start: usize, end: usize) -> Batch {
        let d = self.feature_dim();
        Batch {
            inputs: self.features[start * d..end * d].to_vec(),
            input_dim: d,
            labels: self.labels[start..end].to_vec(),
            size: end - start,
        }
    }

    /// A new dataset holding samples `[start, end)`.
    pub fn range(&self, start: usize, end: usize) -> Result<Dataset> {
        if start > end || end > self.len() {
            return Err(Error::DataLoad(format!("range {start}..{end} outside {} samples", self.len())));
        }
        let b = self.slice(start, end);
        Dataset::new(b.inputs, self.feature_shape.clone(), b.labels, self.num_classes)
    }

    /// Re-encodes features stored as `byte / 255` back into IDX files.
    pub fn to_idx(&self) -> Result<(IdxImages, Vec<u8>)> {
        if self.feature_shape.len() != 2 {
            return Err(Error::DataLoad("only 2-d image datasets map to IDX".into()));
        }
        let pixels = self.features.iter().map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        let labels = self
            .labels
            .iter()
            .map(|&l| u8::try_from(l).map_err(|_| Error::DataLoad(format!("label {l} > 255"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((IdxImages { count: self.len(), rows: self.feature_shape[0], cols: self.feature_shape[1], pixels }, labels))
    }
}

/// A minibatch: row-major inputs plus labels. Synthetic objectives that
/// ignore data use an input-free batch whose `size` is still the sample
/// count `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub input_dim: usize,
    pub labels: Vec<usize>,
    pub size: usize,
}

impl Batch {
    pub fn virtual_of_size(size: usize) -> Self {
        Self { inputs: Vec::new(), input_dim: 0, labels: Vec::new(), size }
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }
}
