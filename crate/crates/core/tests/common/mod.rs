#![allow(dead_code)]

pub mod checks;
pub mod oracle;

use lamb_core::optim::{Beta1Sequence, OptimizerConfig, OptimizerKind, PhiFn};
use lamb_core::{LayeredParams, NormKind, ParamBlock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Three blocks of random sizes with standard-normal entries.
pub fn random_blocks(r: &mut ChaCha8Rng) -> (Vec<String>, Vec<Vec<f64>>) {
    let names = vec!["layer0.weight".to_string(), "layer0.bias".to_string(), "layer1.weight".to_string()];
    let values = (0..3)
        .map(|_| {
            let n = r.random_range(1..=6);
            (0..n).map(|_| normal(r)).collect()
        })
        .collect();
    (names, values)
}

pub fn layered(names: &[String], values: &[Vec<f64>]) -> LayeredParams {
    LayeredParams::new(
        names.iter().zip(values).map(|(n, v)| ParamBlock::new(n.clone(), vec![v.len()], v.clone()).unwrap()).collect(),
    )
    .unwrap()
}

pub fn values(p: &LayeredParams) -> Vec<Vec<f64>> {
    p.blocks().iter().map(|b| b.values().to_vec()).collect()
}

/// A random point of the optimizer config domain for `kind`.
pub fn random_config(kind: OptimizerKind, r: &mut ChaCha8Rng) -> OptimizerConfig {
    let mut c = OptimizerConfig::new(kind);
    c.beta1 = [0.0, 0.5, 0.9, 0.99][r.random_range(0..4)];
    c.beta2 = [0.0, 0.9, 0.999][r.random_range(0..3)];
    if matches!(kind, OptimizerKind::NLamb | OptimizerKind::NnLamb) && c.beta2 == 0.0 {
        // The N-LAMB second moment estimate is identically zero at beta2 = 0.
        c.beta2 = 0.9;
    }
    c.epsilon = [0.0, 1e-8, 1e-6, 1e-3][r.random_range(0..4)];
    c.weight_decay = [0.0, 0.01, 0.1][r.random_range(0..3)];
    c.norm = [NormKind::L2, NormKind::L1, NormKind::LInf][r.random_range(0..3)];
    c.bias_correction = r.random_bool(0.7);
    if r.random_bool(0.5) {
        let lo = r.random_range(0.0..1.0);
        c.phi = PhiFn::clip(lo, lo + r.random_range(0.1..3.0)).unwrap();
    }
    if r.random_bool(0.3) {
        c.decay_exempt = vec!["*.bias".to_string()];
    }
    if r.random_bool(0.3) {
        let n = r.random_range(1..6);
        c.beta1_sequence = Beta1Sequence::Explicit((0..n).map(|_| r.random_range(0.1..0.95)).collect());
    }
    c
}

/// `|a - b| / scale` with `scale = max(|a|, |b|, floor)`.
pub fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
