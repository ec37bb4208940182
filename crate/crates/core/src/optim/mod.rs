//! Optimizer step rules sharing one layerwise normalize-and-scale framework.
//!
//! Every rule produces a per-block direction `u`. The non-layerwise rules
//! (momentum SGD, Adagrad, Adam, AdamW) apply `x <- x - eta * u`. The
//! layerwise rules (LARS, LAMB, N-LAMB, NN-LAMB) rescale each block by its
//! trust ratio `phi(||x||) / ||u||`, so the block moves by exactly
//! `eta * phi(||x||)` in the configured norm.

mod rules;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{LayeredParams, NormKind};

pub use rules::{adagrad_step, adam_step, lamb_step, lars_step, momentum_sgd_step, nlamb_step, step};
pub use trace::{BlockTrace, StepTrace, TRACE_CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "momentum", alias = "momentum_sgd")]
    MomentumSgd,
    #[serde(rename = "adagrad")]
    Adagrad,
    #[serde(rename = "adam")]
    Adam,
    #[serde(rename = "adamw")]
    AdamW,
    #[serde(rename = "lars")]
    Lars,
    #[serde(rename = "lamb")]
    Lamb,
    #[serde(rename = "nlamb")]
    NLamb,
    #[serde(rename = "nnlamb")]
    NnLamb,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 8] = [
        OptimizerKind::MomentumSgd,
        OptimizerKind::Adagrad,
        OptimizerKind::Adam,
        OptimizerKind::AdamW,
        OptimizerKind::Lars,
        OptimizerKind::Lamb,
        OptimizerKind::NLamb,
        OptimizerKind::NnLamb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::MomentumSgd => "momentum",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::Lars => "lars",
            OptimizerKind::Lamb => "lamb",
            OptimizerKind::NLamb => "nlamb",
            OptimizerKind::NnLamb => "nnlamb",
        }
    }

    pub fn is_layerwise(self) -> bool {
        matches!(self, OptimizerKind::Lars | OptimizerKind::Lamb | OptimizerKind::NLamb | OptimizerKind::NnLamb)
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .or_else(|| s.eq_ignore_ascii_case("momentum_sgd").then_some(OptimizerKind::MomentumSgd))
            .ok_or_else(|| Error::config(format!("unknown optimizer `{s}`")))
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    Clip,
    #[default]
    IdentityWithFallback,
}

/// Scaling function applied to the parameter norm.
///
/// `Clip` computes `min(max(z, gamma_l), gamma_u)`. `IdentityWithFallback`
/// is `phi(z) = z`; the fallback for zero norms lives in [`trust_ratio`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhiFn {
    pub gamma_l: f64,
    pub gamma_u: f64,
    pub mode: PhiMode,
}

impl Default for PhiFn {
    fn default() -> Self {
        Self::identity()
    }
}

impl PhiFn {
    pub fn identity() -> Self {
        Self { gamma_l: 0.0, gamma_u: f64::INFINITY, mode: PhiMode::IdentityWithFallback }
    }

    pub fn clip(gamma_l: f64, gamma_u: f64) -> Result<Self> {
        let phi = Self { gamma_l, gamma_u, mode: PhiMode::Clip };
        phi.validate()?;
        Ok(phi)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = !(self.gamma_l >= 0.0) || !(self.gamma_u > 0.0) || self.gamma_l > self.gamma_u;
        if self.mode == PhiMode::Clip && bad {
            return Err(Error::config(format!(
                "phi clip bounds must satisfy 0 <= gamma_l <= gamma_u, gamma_u > 0 (got {}, {})",
                self.gamma_l, self.gamma_u
            )));
        }
        Ok(())
    }

    pub fn apply(&self, z: f64) -> f64 {
        match self.mode {
            PhiMode::Clip => z.max(self.gamma_l).min(self.gamma_u),
            PhiMode::IdentityWithFallback => z,
        }
    }
}

/// Layerwise multiplier `phi(param_norm) / update_norm`; 1 when either norm
/// is zero so a zero-initialized block still moves.
pub fn trust_ratio(param_norm: f64, update_norm: f64, phi: &PhiFn) -> f64 {
    if param_norm > 0.0 && update_norm > 0.0 {
        phi.apply(param_norm) / update_norm
    } else {
        1.0
    }
}

/// Per-step first-moment coefficients `beta1^(t)` for the Nesterov LAMB
/// variants.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beta1Sequence {
    /// `beta1^(t) = beta1` for every step.
    #[default]
    Constant,
    /// Explicit values for t = 1, 2, ...; the last entry repeats.
    Explicit(Vec<f64>),
}

impl Beta1Sequence {
    /// Coefficient for step `t >= 1`.
    pub fn at(&self, beta1: f64, t: u64) -> f64 {
        match self {
            Beta1Sequence::Constant => beta1,
            Beta1Sequence::Explicit(values) => {
                let idx = (t.max(1) - 1) as usize;
                values.get(idx).or(values.last()).copied().unwrap_or(beta1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub phi: PhiFn,
    pub norm: NormKind,
    pub bias_correction: bool,
    /// Block-name patterns (`*` wildcard) excluded from weight decay.
    pub decay_exempt: Vec<String>,
    pub beta1_sequence: Beta1Sequence,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::new(OptimizerKind::Lamb)
    }
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-6,
            weight_decay: 0.01,
            phi: PhiFn::identity(),
            norm: NormKind::L2,
            bias_correction: true,
            decay_exempt: Vec::new(),
            beta1_sequence: Beta1Sequence::Constant,
        }
    }

    // epsilon = 0 is accepted: several exact identities are only testable there.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if let Beta1Sequence::Explicit(values) = &self.beta1_sequence {
            if values.is_empty() {
                return Err(Error::config("beta1_sequence must not be empty"));
            }
            for v in values {
                unit("beta1_sequence entry", *v)?;
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(format!("weight_decay must be finite and >= 0, got {}", self.weight_decay)));
        }
        self.phi.validate()
    }

    /// Weight decay for a named block after applying the exemption list.
    pub fn decay_for(&self, block: &str) -> f64 {
        if self.decay_exempt.iter().any(|p| glob_match(p, block)) {
            0.0
        } else {
            self.weight_decay
        }
    }
}

/// Minimal `*`-wildcard matcher for block names.
pub(crate) fn glob_match(pattern: &str, name: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == name;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !name.starts_with(first) || name.len() < first.len() + last.len() || !name.ends_with(last) {
        return false;
    }
    let mut rest = &name[first.len()..name.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(pos) => rest = &rest[pos + mid.len()..],
            None => return false,
        }
    }
    true
}

/// Moment buffers and step counter. `m` and `v` start at zero; the first
/// call to a step rule uses `t = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub t: u64,
    pub m: LayeredParams,
    pub v: LayeredParams,
    /// Running product of the beta1 sequence, prod_{i<=t} beta1^(i).
    pub beta1_product: f64,
    /// Running product prod_{i<=t} beta2 used by NN-LAMB.
    pub beta2_product: f64,
}

impl OptimizerState {
    pub fn new(params: &LayeredParams) -> Self {
        Self { t: 0, m: params.zeros_like(), v: params.zeros_like(), beta1_product: 1.0, beta2_product: 1.0 }
    }
}

/// Owns a config and its state; the usual entry point.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &LayeredParams) -> Result<Self> {
        config.validate()?;
        Ok(Self { state: OptimizerState::new(params), config })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn step(&mut self, params: &mut LayeredParams, grads: &LayeredParams, eta: f64) -> Result<StepTrace> {
        step(&self.config, &mut self.state, params, grads, eta)
    }
}
