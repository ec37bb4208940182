use super::{trust_ratio, BlockTrace, OptimizerConfig, OptimizerKind, OptimizerState, StepTrace};
use crate::error::{Error, Result};
use crate::params::{block_norm, LayeredParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    MomentumSgd,
    Adagrad,
    Adam { decoupled: bool },
    Lars,
    Lamb,
    NLamb { nesterov_v: bool },
}

impl Rule {
    fn layerwise(self) -> bool {
        matches!(self, Rule::Lars | Rule::Lamb | Rule::NLamb { .. })
    }
}

impl From<OptimizerKind> for Rule {
    fn from(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::MomentumSgd => Rule::MomentumSgd,
            OptimizerKind::Adagrad => Rule::Adagrad,
            OptimizerKind::Adam => Rule::Adam { decoupled: false },
            OptimizerKind::AdamW => Rule::Adam { decoupled: true },
            OptimizerKind::Lars => Rule::Lars,
            OptimizerKind::Lamb => Rule::Lamb,
            OptimizerKind::NLamb => Rule::NLamb { nesterov_v: false },
            OptimizerKind::NnLamb => Rule::NLamb { nesterov_v: true },
        }
    }
}

/// Applies the rule selected by `config.kind`.
pub fn step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    params: &mut LayeredParams,
    grads: &LayeredParams,
    eta: f64,
) -> Result<StepTrace> {
    run(config, state, params, grads, eta, config.kind.into())
}

/// Heavy-ball momentum: `m <- b1 m + (1 - b1)(g + lambda x)`, `x <- x - eta m`.
pub fn momentum_sgd_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    params: &mut LayeredParams,
    grads: &LayeredParams,
    eta: f64,
) -> Result<StepTrace> {
    run(config, state, params, grads, eta, Rule::MomentumSgd)
}

/// Accumulator form: `v <- v + g^2`, `x <- x - eta g / (sqrt(v) + eps)`.
pub fn adagrad_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    params: &mut LayeredParams,
    grads: &LayeredParams,
    eta: f64,
) -> Result<StepTrace> {
    run(config, state, params, grads, eta, Rule::Adagrad)
}

/// Adam, or AdamW when `decoupled` is set (weight decay added to the ratio
/// instead of the gradient).
pub fn adam_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    params: &mut LayeredParams,
    grads: &LayeredParams,
    eta: f64,
    decoupled: bool,
) -> Result<StepTrace> {
    run(config, state, params, grads, eta, Rule::Adam { decoupled })
}

pub fn lars_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    params: &mut LayeredParams,
    grads: &LayeredParams,
    eta: f64,
) -> Result<StepTrace> {
    run(config, state, params, grads, eta, Rule::Lars)
}

pub fn lamb_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    params: &mut LayeredParams,
    grads: &LayeredParams,
    eta: f64,
) -> Result<StepTrace> {
    run(config, state, params, grads, eta, Rule::Lamb)
}

/// N-LAMB, or NN-LAMB when `nesterov_v` is set.
pub fn nlamb_step(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    params: &mut LayeredParams,
    grads: &LayeredParams,
    eta: f64,
    nesterov_v: bool,
) -> Result<StepTrace> {
    run(config, state, params, grads, eta, Rule::NLamb { nesterov_v })
}

/// `num / den`, except that `0 / 0` is 0. Only reachable with `eps = 0`
/// on coordinates whose gradient history is all zero.
#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 && num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Scalar coefficients shared by every block in one step.
struct Coefficients {
    beta1: f64,
    beta2: f64,
    eps: f64,
    /// Adam bias corrections `1 - beta^t` (1 when disabled).
    correction1: f64,
    correction2: f64,
    /// Nesterov coefficients: beta1^(t), beta1^(t+1) and the products
    /// `1 - prod_{i<=t}`, `1 - prod_{i<=t+1}`.
    mu_t: f64,
    mu_next: f64,
    one_minus_prod1_t: f64,
    one_minus_prod1_next: f64,
    one_minus_beta2_pow_t: f64,
    one_minus_prod2_next: f64,
    beta1_product: f64,
    beta2_product: f64,
}

impl Coefficients {
    fn new(config: &OptimizerConfig, state: &OptimizerState, t: u64) -> Self {
        let (beta1, beta2) = (config.beta1, config.beta2);
        let tp = i32::try_from(t).unwrap_or(i32::MAX);
        let (correction1, correction2) =
            if config.bias_correction { (1.0 - beta1.powi(tp), 1.0 - beta2.powi(tp)) } else { (1.0, 1.0) };
        let mu_t = config.beta1_sequence.at(beta1, t);
        let mu_next = config.beta1_sequence.at(beta1, t + 1);
        let beta1_product = state.beta1_product * mu_t;
        let beta2_product = state.beta2_product * beta2;
        Self {
            beta1,
            beta2,
            eps: config.epsilon,
            correction1,
            correction2,
            mu_t,
            mu_next,
            one_minus_prod1_t: 1.0 - beta1_product,
            one_minus_prod1_next: 1.0 - beta1_product * mu_next,
            one_minus_beta2_pow_t: 1.0 - beta2.powi(tp),
            one_minus_prod2_next: 1.0 - beta2_product * beta2,
            beta1_product,
            beta2_product,
        }
    }
}

fn run(
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    params: &mut LayeredParams,
    grads: &LayeredParams,
    eta: f64,
    rule: Rule,
) -> Result<StepTrace> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::config(format!("learning rate must be finite and >= 0, got {eta}")));
    }
    params.check_aligned(grads)?;
    params.check_aligned(&state.m)?;
    params.check_aligned(&state.v)?;

    let t = state.t + 1;
    let k = Coefficients::new(config, state, t);
    let mut new_m = state.m.clone();
    let mut new_v = state.v.clone();
    let mut deltas = params.zeros_like();
    let mut traces = Vec::with_capacity(params.num_blocks());

    for (i, x_block) in params.blocks().iter().enumerate() {
        let x = x_block.values();
        let g = grads.blocks()[i].values();
        let m = new_m.blocks_mut()[i].values_mut();
        let lambda = config.decay_for(x_block.name());
        let mut u = vec![0.0; x.len()];

        match rule {
            Rule::MomentumSgd | Rule::Lars => {
                for j in 0..x.len() {
                    let gd = g[j] + lambda * x[j];
                    m[j] = k.beta1 * m[j] + (1.0 - k.beta1) * gd;
                    u[j] = m[j];
                }
            }
            Rule::Adagrad => {
                let v = new_v.blocks_mut()[i].values_mut();
                for j in 0..x.len() {
                    let gd = g[j] + lambda * x[j];
                    v[j] += gd * gd;
                    u[j] = ratio(gd, v[j].sqrt() + k.eps);
                }
            }
            Rule::Adam { decoupled } => {
                let v = new_v.blocks_mut()[i].values_mut();
                for j in 0..x.len() {
                    let gj = if decoupled { g[j] } else { g[j] + lambda * x[j] };
                    m[j] = k.beta1 * m[j] + (1.0 - k.beta1) * gj;
                    v[j] = k.beta2 * v[j] + (1.0 - k.beta2) * gj * gj;
                    let m_hat = m[j] / k.correction1;
                    let v_hat = v[j] / k.correction2;
                    let r = ratio(m_hat, v_hat.sqrt() + k.eps);
                    u[j] = if decoupled { r + lambda * x[j] } else { r };
                }
            }
            Rule::Lamb => {
                let v = new_v.blocks_mut()[i].values_mut();
                for j in 0..x.len() {
                    m[j] = k.beta1 * m[j] + (1.0 - k.beta1) * g[j];
                    v[j] = k.beta2 * v[j] + (1.0 - k.beta2) * g[j] * g[j];
                    let m_hat = m[j] / k.correction1;
                    let v_hat = v[j] / k.correction2;
                    u[j] = ratio(m_hat, v_hat.sqrt() + k.eps) + lambda * x[j];
                }
            }
            Rule::NLamb { nesterov_v } => {
                let v = new_v.blocks_mut()[i].values_mut();
                for j in 0..x.len() {
                    let gsq = g[j] * g[j];
                    m[j] = k.beta1 * m[j] + (1.0 - k.beta1) * g[j];
                    v[j] = k.beta2 * v[j] + (1.0 - k.beta2) * gsq;
                    let m_hat = k.mu_next * m[j] / k.one_minus_prod1_next + (1.0 - k.mu_t) * g[j] / k.one_minus_prod1_t;
                    let v_hat = if nesterov_v {
                        k.beta2 * v[j] / k.one_minus_prod2_next + (1.0 - k.beta2) * gsq / k.one_minus_beta2_pow_t
                    } else {
                        k.beta2 * v[j] / k.one_minus_beta2_pow_t
                    };
                    u[j] = ratio(m_hat, v_hat.sqrt() + k.eps) + lambda * x[j];
                }
            }
        }

        let param_norm = block_norm(x, config.norm);
        let update_norm = block_norm(&u, config.norm);
        let ratio = if rule.layerwise() { trust_ratio(param_norm, update_norm, &config.phi) } else { 1.0 };
        let effective_lr = eta * ratio;
        let d = deltas.blocks_mut()[i].values_mut();
        for (dj, uj) in d.iter_mut().zip(&u) {
            *dj = -effective_lr * uj;
        }
        traces.push(BlockTrace {
            name: x_block.name().to_owned(),
            param_norm,
            update_norm,
            trust_ratio: ratio,
            effective_lr,
        });
    }

    for block in new_m.blocks().iter().chain(new_v.blocks()) {
        if block.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { block: block.name().to_owned() });
        }
    }
    for block in deltas.blocks() {
        if block.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { block: block.name().to_owned() });
        }
    }
    params.apply_update(&deltas)?;

    state.t = t;
    state.m = new_m;
    state.v = new_v;
    state.beta1_product = k.beta1_product;
    state.beta2_product = k.beta2_product;

    Ok(StepTrace { step: t, blocks: traces })
}
