//! Measurements shared by the focused test files and the acceptance run.
//! Each returns the quantity being judged so callers can both assert on it
//! and report it.

use lamb_core::data::Batch;
use lamb_core::harness::{check_model, DEFAULT_STEP};
use lamb_core::models::{Arch, LeNetArch, Model, NoisyQuadraticSpec};
use lamb_core::optim::{Optimizer, OptimizerConfig, OptimizerKind, PhiFn};
use lamb_core::schedule::{scale_warmup, sqrt_scale_lr};
use lamb_core::{block_norm, NormKind};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::oracle::{oracle_step, ScalarState};
use super::{layered, normal, random_blocks, random_config, rel_diff, rng, values};

// Oracle differential.

/// Per-coordinate error scale: a value is compared relative to the largest
/// operand that produced it, so an entry that cancels to nearly zero is not
/// judged against its own tiny magnitude.
struct Floors {
    x: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

fn floors(prev: &ScalarState, next: &ScalarState, grads: &[Vec<f64>], lambda: f64) -> Floors {
    let mut f = Floors { x: Vec::new(), m: Vec::new(), v: Vec::new() };
    for i in 0..prev.x.len() {
        let mut fx = Vec::new();
        let mut fm = Vec::new();
        let mut fv = Vec::new();
        for j in 0..prev.x[i].len() {
            let step = (next.x[i][j] - prev.x[i][j]).abs();
            let g = grads[i][j].abs() + lambda * prev.x[i][j].abs();
            fx.push(prev.x[i][j].abs().max(step));
            fm.push(prev.m[i][j].abs().max(g));
            fv.push(prev.v[i][j].abs().max(g * g));
        }
        f.x.push(fx);
        f.m.push(fm);
        f.v.push(fv);
    }
    f
}

/// Runs `steps` random steps through both implementations and returns the
/// worst per-coordinate relative difference seen at any step.
pub fn max_divergence(kind: OptimizerKind, seed: u64, steps: usize) -> f64 {
    let mut r = rng(seed);
    let cfg = random_config(kind, &mut r);
    let (names, x0) = random_blocks(&mut r);
    let mut params = layered(&names, &x0);
    let mut opt = Optimizer::new(cfg.clone(), &params).unwrap();
    let mut scalar = ScalarState::new(names.clone(), x0);
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        let grads: Vec<Vec<f64>> = scalar.x.iter().map(|b| b.iter().map(|_| normal(&mut r)).collect()).collect();
        let eta = r.random_range(1e-3..0.3);
        let next = oracle_step(&cfg, &scalar, &grads, eta);
        opt.step(&mut params, &layered(&names, &grads), eta).unwrap();
        let fl = floors(&scalar, &next, &grads, cfg.weight_decay);
        let got_x = values(&params);
        let got_m = values(&opt.state().m);
        let got_v = values(&opt.state().v);
        for i in 0..names.len() {
            for j in 0..got_x[i].len() {
                worst = worst
                    .max(rel_diff(got_x[i][j], next.x[i][j], fl.x[i][j]))
                    .max(rel_diff(got_m[i][j], next.m[i][j], fl.m[i][j]))
                    .max(rel_diff(got_v[i][j], next.v[i][j], fl.v[i][j]));
            }
        }
        assert_eq!(opt.state().t, next.t);
        scalar = next;
    }
    worst
}

/// Worst divergence over `seeds` random configs of every kind.
pub fn oracle_worst(seeds: u64, steps: usize) -> (f64, OptimizerKind) {
    let mut out = (0.0, OptimizerKind::Lamb);
    for kind in OptimizerKind::ALL {
        for seed in 0..seeds {
            let d = max_divergence(kind, 1000 * seed + kind as u64, steps);
            if d > out.0 {
                out = (d, kind);
            }
        }
    }
    out
}

// Layerwise properties. Every case draws its whole setup from one seed.

pub const PROPERTY_CASES: u64 = 1000;

fn norm_kind(r: &mut ChaCha8Rng) -> NormKind {
    [NormKind::L2, NormKind::L1, NormKind::LInf][r.random_range(0..3)]
}

/// Blocks of 1..=8 entries, all bounded away from zero.
fn nonzero_blocks(r: &mut ChaCha8Rng, n_blocks: usize) -> (Vec<String>, Vec<Vec<f64>>) {
    let names = (0..n_blocks).map(|i| format!("layer{i}.weight")).collect();
    let vals = (0..n_blocks)
        .map(|_| {
            let n = r.random_range(1..=8);
            (0..n)
                .map(|_| {
                    let z = normal(r);
                    z + 0.1 * z.signum()
                })
                .collect()
        })
        .collect();
    (names, vals)
}

/// Standard-normal gradients shifted off zero.
fn random_grads(r: &mut ChaCha8Rng, like: &[Vec<f64>]) -> Vec<Vec<f64>> {
    like.iter().map(|b| b.iter().map(|_| normal(r) + 1e-3).collect()).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    rel_diff(a, b, 0.0)
}

/// Worst relative gap between `||Δ_i||` and `η ||x_i||` over all blocks, for
/// LARS or LAMB with identity phi at a state warmed by a few random steps.
pub fn update_length_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let kind = if r.random_bool(0.5) { OptimizerKind::Lamb } else { OptimizerKind::Lars };
    let mut cfg = OptimizerConfig::new(kind);
    cfg.phi = PhiFn::identity();
    cfg.norm = norm_kind(&mut r);
    cfg.weight_decay = [0.0, 0.01][r.random_range(0..2)];
    let n_blocks = r.random_range(1..5);
    let (names, x0) = nonzero_blocks(&mut r, n_blocks);
    let mut x = layered(&names, &x0);
    let mut opt = Optimizer::new(cfg.clone(), &x).unwrap();
    for _ in 0..r.random_range(0..4) {
        let g = random_grads(&mut r, &values(&x));
        opt.step(&mut x, &layered(&names, &g), 1e-3).unwrap();
    }
    let eta = r.random_range(0.01..1.0);
    let before = values(&x);
    let g = random_grads(&mut r, &before);
    opt.step(&mut x, &layered(&names, &g), eta).unwrap();
    let mut worst: f64 = 0.0;
    for (old, new) in before.iter().zip(values(&x)) {
        let delta: Vec<f64> = old.iter().zip(&new).map(|(o, n)| n - o).collect();
        worst = worst.max(rel(block_norm(&delta, cfg.norm), eta * block_norm(old, cfg.norm)));
    }
    worst
}

/// Steps two optimizers in lockstep from the same parameters at every step
/// and returns the worst blockwise `||Δa - Δb|| / ||Δb||`. Measuring the
/// update, not the updated coordinates, keeps cancellation in `x + Δ` out of
/// the comparison.
fn worst_update_gap(
    a: (&OptimizerConfig, &[Vec<Vec<f64>>]),
    b: (&OptimizerConfig, &[Vec<Vec<f64>>]),
    names: &[String],
    x0: &[Vec<f64>],
    eta: f64,
) -> f64 {
    let mut x = layered(names, x0);
    let mut opt_a = Optimizer::new(a.0.clone(), &x).unwrap();
    let mut opt_b = Optimizer::new(b.0.clone(), &x).unwrap();
    let mut worst = 0.0f64;
    for (ga, gb) in a.1.iter().zip(b.1) {
        let (mut xa, mut xb) = (x.clone(), x.clone());
        opt_a.step(&mut xa, &layered(names, ga), eta).unwrap();
        opt_b.step(&mut xb, &layered(names, gb), eta).unwrap();
        for ((old, na), nb) in values(&x).iter().zip(values(&xa)).zip(values(&xb)) {
            let gap: f64 = na.iter().zip(&nb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            let len: f64 = nb.iter().zip(old).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            worst = worst.max(gap / len);
        }
        x = xb;
    }
    worst
}

/// Update gap between steps on `g` and on `c·g` (c spanning 12 decades),
/// λ = ε = 0.
pub fn scale_invariance_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let kind = if r.random_bool(0.5) { OptimizerKind::Lamb } else { OptimizerKind::Lars };
    let mut cfg = OptimizerConfig::new(kind);
    cfg.weight_decay = 0.0;
    cfg.epsilon = 0.0;
    cfg.norm = norm_kind(&mut r);
    let (names, x0) = nonzero_blocks(&mut r, 3);
    let c = 10f64.powf(r.random_range(-6.0..6.0));
    let eta = r.random_range(0.01..1.0);
    let grads: Vec<Vec<Vec<f64>>> = (0..3).map(|_| random_grads(&mut r, &x0)).collect();
    let scaled: Vec<Vec<Vec<f64>>> =
        grads.iter().map(|g| g.iter().map(|b| b.iter().map(|v| c * v).collect()).collect()).collect();
    worst_update_gap((&cfg, &grads), (&cfg, &scaled), &names, &x0, eta)
}

/// Update gap between LAMB with and without bias correction, λ = ε = 0.
pub fn bias_correction_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut cfg = OptimizerConfig::new(OptimizerKind::Lamb);
    cfg.weight_decay = 0.0;
    cfg.epsilon = 0.0;
    cfg.beta1 = r.random_range(0.0..0.99);
    cfg.beta2 = r.random_range(0.5..0.9999);
    cfg.norm = norm_kind(&mut r);
    let (names, x0) = nonzero_blocks(&mut r, 3);
    let eta = r.random_range(0.01..1.0);
    let steps = r.random_range(1..6);
    let grads: Vec<Vec<Vec<f64>>> = (0..steps).map(|_| random_grads(&mut r, &x0)).collect();
    let mut on = cfg.clone();
    on.bias_correction = true;
    let mut off = cfg;
    off.bias_correction = false;
    worst_update_gap((&on, &grads), (&off, &grads), &names, &x0, eta)
}

/// LAMB with β1 = β2 = λ = ε = 0 against an explicit blockwise sign step.
/// `None` when every coordinate matches exactly, otherwise a description.
pub fn sign_descent_case(seed: u64) -> Option<String> {
    let mut r = rng(seed);
    let mut cfg = OptimizerConfig::new(OptimizerKind::Lamb);
    cfg.beta1 = 0.0;
    cfg.beta2 = 0.0;
    cfg.weight_decay = 0.0;
    cfg.epsilon = 0.0;
    cfg.norm = norm_kind(&mut r);
    let (names, x0) = nonzero_blocks(&mut r, 4);
    let g = random_grads(&mut r, &x0);
    assert!(g.iter().flatten().all(|v| *v != 0.0));
    let eta = r.random_range(1e-4..1.0);
    let mut x = layered(&names, &x0);
    let mut opt = Optimizer::new(cfg.clone(), &x).unwrap();
    let trace = opt.step(&mut x, &layered(&names, &g), eta).unwrap();
    for (i, (old, new)) in x0.iter().zip(values(&x)).enumerate() {
        let signs: Vec<f64> = g[i].iter().map(|v| v.signum()).collect();
        let bt = &trace.blocks[i];
        // The direction is exactly the sign vector, so its norm is the norm
        // of a vector of ones.
        if bt.update_norm != block_norm(&signs, cfg.norm) {
            return Some(format!("seed {seed} block {i}: direction norm {}", bt.update_norm));
        }
        for j in 0..old.len() {
            if new[j] != old[j] + (-bt.effective_lr * signs[j]) {
                return Some(format!("seed {seed} block {i}[{j}]"));
            }
        }
    }
    None
}

// Scaling tables.

pub const TABLE_BATCHES: [usize; 7] = [512, 1024, 2048, 4096, 8192, 16384, 32768];
/// The exponent `k` of `2^k` in each LR denominator.
const EXPONENTS: [f64; 7] = [3.0, 2.5, 2.0, 1.5, 1.0, 0.5, 0.0];

type Mismatch = (usize, f64, f64);

/// BERT table: LR `5 / (2^k * 10^3)` from the batch-512 value.
pub fn bert_lr_mismatches() -> Vec<Mismatch> {
    let base = 5.0 / (8.0 * 1e3);
    TABLE_BATCHES
        .iter()
        .zip(EXPONENTS)
        .map(|(&b, k)| (b, sqrt_scale_lr(base, 512, b), 5.0 / (2f64.powf(k) * 1e3)))
        .filter(|(_, got, want)| got != want)
        .collect()
}

/// BERT table: warmup ratio `1/320 ... 1/5`.
pub fn bert_warmup_mismatches() -> Vec<Mismatch> {
    let want = [320.0, 160.0, 80.0, 40.0, 20.0, 10.0, 5.0];
    TABLE_BATCHES
        .iter()
        .zip(want)
        .map(|(&b, d)| (b, scale_warmup(1.0 / 320.0, 512, b), 1.0 / d))
        .filter(|(_, got, want)| got != want)
        .collect()
}

/// ImageNet table: LR `4 / (2^k * 100)` from the batch-512 value.
pub fn resnet_lr_mismatches() -> Vec<Mismatch> {
    let base = 4.0 / (8.0 * 100.0);
    TABLE_BATCHES
        .iter()
        .zip(EXPONENTS)
        .map(|(&b, k)| (b, sqrt_scale_lr(base, 512, b), 4.0 / (2f64.powf(k) * 100.0)))
        .filter(|(_, got, want)| got != want)
        .collect()
}

/// ImageNet table: warmup epochs `0.3125 ... 20` over 90 epochs, through the
/// same linear rule expressed as a fraction of the run.
pub fn resnet_warmup_epoch_mismatches() -> Vec<Mismatch> {
    let want = [0.3125, 0.625, 1.25, 2.5, 5.0, 10.0, 20.0];
    TABLE_BATCHES
        .iter()
        .zip(want)
        .map(|(&b, e)| (b, scale_warmup(0.3125 / 90.0, 512, b) * 90.0, e))
        .filter(|(_, got, want)| (got - want).abs() > 1e-12 * want)
        .collect()
}

// Gradient checks.

pub const GRADCHECK_INSTANCES: u64 = 20;

pub fn random_batch(r: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> Batch {
    Batch {
        inputs: (0..n * dim).map(|_| normal(r)).collect(),
        input_dim: dim,
        labels: (0..n).map(|_| r.random_range(0..classes)).collect(),
        size: n,
    }
}

/// A model at a random point: the seeded init plus a perturbation of every
/// entry, so biases are nonzero and no ReLU input sits exactly on its kink.
pub fn random_params(arch: Arch, r: &mut ChaCha8Rng) -> Model {
    let init = Model::init(arch.clone(), r.random()).unwrap();
    let vals =
        init.params().blocks().iter().map(|b| b.values().iter().map(|v| v + 0.1 * normal(r)).collect()).collect();
    Model::with_params(arch, init.params().with_values(vals).unwrap()).unwrap()
}

/// Worst gradient-check error over the instances, with the instance index.
fn worst(arch_of: impl Fn(&mut ChaCha8Rng) -> Arch, seed: u64) -> (f64, u64) {
    let mut out = (0.0, 0);
    for i in 0..GRADCHECK_INSTANCES {
        let mut r = rng(seed + i);
        let arch = arch_of(&mut r);
        let model = random_params(arch.clone(), &mut r);
        let n = r.random_range(1..=4);
        let batch = random_batch(&mut r, n, arch.input_dim().unwrap(), arch.classes().unwrap());
        let report = check_model(&model, &batch, DEFAULT_STEP).unwrap();
        if report.max_error > out.0 {
            out = (report.max_error, i);
        }
    }
    out
}

pub fn logistic_worst() -> (f64, u64) {
    worst(|r| Arch::LogisticRegression { input_dim: r.random_range(1..20), classes: r.random_range(2..8) }, 100)
}

pub fn mlp_worst() -> (f64, u64) {
    worst(
        |r| {
            let depth = r.random_range(2..5);
            let mut sizes: Vec<usize> = (0..depth).map(|_| r.random_range(1..12)).collect();
            sizes.push(r.random_range(2..6));
            Arch::Mlp { sizes }
        },
        200,
    )
}

/// Small LeNet variants: the same layer structure at sizes where central
/// differences over every coordinate stay cheap.
pub fn lenet_worst() -> (f64, u64) {
    worst(
        |r| {
            let kernel = [3, 5][r.random_range(0..2)];
            // Both conv outputs must have even sides.
            let in_side = if kernel == 3 { [10, 14][r.random_range(0..2)] } else { 16 };
            Arch::LeNet(LeNetArch {
                in_side,
                c1: r.random_range(1..4),
                c2: r.random_range(1..4),
                kernel,
                hidden: r.random_range(2..8),
                classes: r.random_range(2..5),
            })
        },
        300,
    )
}

/// A unit-scale quadratic: curvatures, optimum and offset all of order one.
/// The bound is an absolute rounding budget at h = 1e-5, so it only means
/// something when the loss itself is of order one.
pub fn random_quadratic(r: &mut ChaCha8Rng) -> NoisyQuadraticSpec {
    let h = r.random_range(1..6);
    let mut spec = NoisyQuadraticSpec::new(
        (0..h).map(|_| r.random_range(1..8)).collect(),
        (0..h).map(|_| r.random_range(0.5..2.0)).collect(),
        (0..h).map(|_| r.random_range(0.0..2.0)).collect(),
    )
    .unwrap();
    spec.optimum = Some(spec.dims.iter().map(|&d| (0..d).map(|_| normal(r)).collect()).collect());
    spec.init_offset = r.random_range(-1.0..1.0);
    spec
}

pub fn quadratic_worst() -> (f64, u64) {
    let mut out = (0.0, 0);
    for i in 0..GRADCHECK_INSTANCES {
        let mut r = rng(400 + i);
        let model = Model::init(Arch::NoisyQuadratic(random_quadratic(&mut r)), 0).unwrap();
        let report = check_model(&model, &Batch::virtual_of_size(r.random_range(1..64)), DEFAULT_STEP).unwrap();
        if report.max_error > out.0 {
            out = (report.max_error, i);
        }
    }
    out
}
