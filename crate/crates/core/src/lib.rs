//! Layerwise adaptive large-batch optimization.
//!
//! The crate is organized bottom-up:
//!
//! * [`params`] holds block-partitioned parameters and the norms every
//!   optimizer is built on.
//! * [`optim`] implements the step rules: momentum SGD, Adagrad, Adam,
//!   AdamW, LARS, LAMB and the two Nesterov LAMB variants.
//! * [`schedule`] maps a global step to a learning rate (warmup, polynomial
//!   and step decay, mixed-batch re-warm-up) and carries the batch-size
//!   scaling rules.
//! * [`models`] provides small differentiable models with hand-derived
//!   gradients plus a central finite-difference oracle.
//! * [`data`] reads and writes IDX files and samples seeded minibatches.
//! * [`harness`] wires the pieces into reproducible runs and is what the
//!   `lamb` binary drives.

// Validation is written as `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod harness;
pub mod models;
pub mod optim;
pub mod params;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
pub use optim::{trust_ratio, Optimizer, OptimizerConfig, OptimizerKind, OptimizerState, PhiFn, PhiMode, StepTrace};
pub use params::{block_norm, LayeredParams, NormKind, ParamBlock};
pub use schedule::{lr_at, scale_warmup, sqrt_scale_lr, ScheduleSpec};
