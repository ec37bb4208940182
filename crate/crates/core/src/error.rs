use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value produced in block `{block}`")]
    NonFinite { block: String },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("step {step} outside schedule range [0, {total}]")]
    StepOutOfRange { step: u64, total: u64 },

    #[error("bad magic number: expected {expected}, found {found}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("batch size {batch} exceeds dataset size {available}")]
    BatchTooLarge { batch: usize, available: usize },

    #[error("data load error: {0}")]
    DataLoad(String),

    #[error("numerical divergence at step {step} (loss = {loss})")]
    NumericalDivergence { step: u64, loss: f64 },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFinite { .. } => "NonFinite",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::StepOutOfRange { .. } => "StepOutOfRange",
            Error::BadMagic { .. } => "BadMagic",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::CountMismatch { .. } => "CountMismatch",
            Error::BatchTooLarge { .. } => "BatchTooLarge",
            Error::DataLoad(_) => "DataLoadError",
            Error::NumericalDivergence { .. } => "NumericalDivergence",
            Error::Checkpoint(_) => "CheckpointError",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::ConfigInvalid(msg.into())
    }
}
