//! Naive scalar re-implementation of every step rule, written straight from
//! the algorithm listings with plain loops. Test-only: it exists to catch
//! drift in the optimized module, so it shares no code with it beyond the
//! config type.

use lamb_core::optim::{Beta1Sequence, OptimizerConfig, OptimizerKind, PhiMode};
use lamb_core::NormKind;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarState {
    pub names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl ScalarState {
    pub fn new(names: Vec<String>, x: Vec<Vec<f64>>) -> Self {
        let zeros: Vec<Vec<f64>> = x.iter().map(|b| vec![0.0; b.len()]).collect();
        ScalarState { names, m: zeros.clone(), v: zeros, x, t: 0 }
    }
}

fn norm(v: &[f64], kind: NormKind) -> f64 {
    match kind {
        NormKind::L1 => {
            let mut s = 0.0;
            for a in v {
                s += a.abs();
            }
            s
        }
        NormKind::L2 => {
            let mut s = 0.0;
            for a in v {
                s += a * a;
            }
            s.sqrt()
        }
        NormKind::LInf => {
            let mut s: f64 = 0.0;
            for a in v {
                if a.abs() > s {
                    s = a.abs();
                }
            }
            s
        }
    }
}

fn pow(base: f64, n: u64) -> f64 {
    let mut p = 1.0;
    for _ in 0..n {
        p *= base;
    }
    p
}

/// `β1^(i)` from the configured sequence, `i >= 1`.
fn beta1_at(cfg: &OptimizerConfig, i: u64) -> f64 {
    match &cfg.beta1_sequence {
        Beta1Sequence::Constant => cfg.beta1,
        Beta1Sequence::Explicit(vals) => {
            let idx = (i - 1) as usize;
            if idx < vals.len() {
                vals[idx]
            } else {
                *vals.last().unwrap()
            }
        }
    }
}

fn product_beta1(cfg: &OptimizerConfig, upto: u64) -> f64 {
    let mut p = 1.0;
    for i in 1..=upto {
        p *= beta1_at(cfg, i);
    }
    p
}

fn phi(cfg: &OptimizerConfig, z: f64) -> f64 {
    match cfg.phi.mode {
        PhiMode::IdentityWithFallback => z,
        PhiMode::Clip => {
            let mut r = z;
            if r < cfg.phi.gamma_l {
                r = cfg.phi.gamma_l;
            }
            if r > cfg.phi.gamma_u {
                r = cfg.phi.gamma_u;
            }
            r
        }
    }
}

fn exempt(cfg: &OptimizerConfig, name: &str) -> bool {
    // Patterns in the tests only use a single trailing or leading `*`.
    cfg.decay_exempt.iter().any(|p| {
        if let Some(prefix) = p.strip_suffix('*') {
            name.starts_with(prefix)
        } else if let Some(suffix) = p.strip_prefix('*') {
            name.ends_with(suffix)
        } else {
            p == name
        }
    })
}

fn div(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// One step of the rule named by `cfg.kind`. Returns the new state.
pub fn oracle_step(cfg: &OptimizerConfig, s: &ScalarState, grads: &[Vec<f64>], eta: f64) -> ScalarState {
    let t = s.t + 1;
    let b1 = cfg.beta1;
    let b2 = cfg.beta2;
    let eps = cfg.epsilon;
    let mut out = s.clone();
    out.t = t;

    for i in 0..s.x.len() {
        let lambda = if exempt(cfg, &s.names[i]) { 0.0 } else { cfg.weight_decay };
        let x = &s.x[i];
        let g = &grads[i];
        let n = x.len();
        let mut m = s.m[i].clone();
        let mut v = s.v[i].clone();
        let mut u = vec![0.0; n];

        match cfg.kind {
            OptimizerKind::MomentumSgd | OptimizerKind::Lars => {
                for j in 0..n {
                    m[j] = b1 * m[j] + (1.0 - b1) * (g[j] + lambda * x[j]);
                    u[j] = m[j];
                }
            }
            OptimizerKind::Adagrad => {
                for j in 0..n {
                    let gg = g[j] + lambda * x[j];
                    v[j] += gg * gg;
                    u[j] = div(gg, v[j].sqrt() + eps);
                }
            }
            OptimizerKind::Adam | OptimizerKind::AdamW | OptimizerKind::Lamb => {
                let (c1, c2) = if cfg.bias_correction { (1.0 - pow(b1, t), 1.0 - pow(b2, t)) } else { (1.0, 1.0) };
                for j in 0..n {
                    let gg = if cfg.kind == OptimizerKind::Adam { g[j] + lambda * x[j] } else { g[j] };
                    m[j] = b1 * m[j] + (1.0 - b1) * gg;
                    v[j] = b2 * v[j] + (1.0 - b2) * gg * gg;
                    let r = div(m[j] / c1, (v[j] / c2).sqrt() + eps);
                    u[j] = if cfg.kind == OptimizerKind::Adam { r } else { r + lambda * x[j] };
                }
            }
            OptimizerKind::NLamb | OptimizerKind::NnLamb => {
                let mu_t = beta1_at(cfg, t);
                let mu_next = beta1_at(cfg, t + 1);
                let prod_t = product_beta1(cfg, t);
                let prod_next = product_beta1(cfg, t + 1);
                for j in 0..n {
                    m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                    let m_hat = mu_next * m[j] / (1.0 - prod_next) + (1.0 - mu_t) * g[j] / (1.0 - prod_t);
                    v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                    let v_hat = if cfg.kind == OptimizerKind::NLamb {
                        b2 * v[j] / (1.0 - pow(b2, t))
                    } else {
                        b2 * v[j] / (1.0 - pow(b2, t + 1)) + (1.0 - b2) * g[j] * g[j] / (1.0 - pow(b2, t))
                    };
                    u[j] = div(m_hat, v_hat.sqrt() + eps) + lambda * x[j];
                }
            }
        }

        let layerwise = matches!(
            cfg.kind,
            OptimizerKind::Lars | OptimizerKind::Lamb | OptimizerKind::NLamb | OptimizerKind::NnLamb
        );
        let mut scale = eta;
        if layerwise {
            let xn = norm(x, cfg.norm);
            let un = norm(&u, cfg.norm);
            if xn > 0.0 && un > 0.0 {
                scale = eta * (phi(cfg, xn) / un);
            }
        }
        let mut new_x = x.clone();
        for j in 0..n {
            new_x[j] = x[j] + (-scale * u[j]);
        }
        out.x[i] = new_x;
        out.m[i] = m;
        out.v[i] = v;
    }
    out
}
