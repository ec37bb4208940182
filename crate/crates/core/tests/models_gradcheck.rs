//! Analytic gradients of every model against central differences, plus the
//! statistics of the quadratic's gradient noise.

mod common;

use common::checks::{
    lenet_worst, logistic_worst, mlp_worst, quadratic_worst, random_batch, random_params, random_quadratic,
    GRADCHECK_INSTANCES,
};
use common::rng;
use lamb_core::data::Batch;
use lamb_core::harness::{DEFAULT_STEP, NEURAL_TOLERANCE, QUADRATIC_TOLERANCE};
use lamb_core::models::{Arch, LeNetArch, Model, NoisyQuadraticSpec};
use rand::Rng;

#[test]
fn logistic_regression_gradients() {
    let (e, i) = logistic_worst();
    assert!(e <= NEURAL_TOLERANCE, "instance {i}: {e:e}");
}

#[test]
fn mlp_gradients() {
    let (e, i) = mlp_worst();
    assert!(e <= 1e-6, "instance {i}: {e:e}");
}

#[test]
fn lenet_gradients() {
    let (e, i) = lenet_worst();
    assert!(e <= NEURAL_TOLERANCE, "instance {i}: {e:e}");
}

#[test]
fn quadratic_gradients() {
    let (e, i) = quadratic_worst();
    assert!(e <= QUADRATIC_TOLERANCE, "instance {i}: {e:e}");
}

#[test]
fn quadratic_gradients_are_absolutely_close() {
    for i in 0..GRADCHECK_INSTANCES {
        let mut r = rng(450 + i);
        let model = Model::init(Arch::NoisyQuadratic(random_quadratic(&mut r)), 0).unwrap();
        let batch = Batch::virtual_of_size(8);
        let a = model.backward_grad(&batch, None).unwrap();
        let n = model.finite_diff_grad(&batch, DEFAULT_STEP).unwrap();
        for (x, y) in a.iter().flatten().zip(n.iter().flatten()) {
            assert!((x - y).abs() <= 1e-9, "instance {i}: {x} vs {y}");
        }
    }
}

#[test]
fn quadratic_noise_variance_matches_sigma() {
    let spec = NoisyQuadraticSpec::new(vec![3, 5], vec![1.0, 10.0], vec![0.5, 2.0]).unwrap();
    let b = 16;
    let model = Model::init(Arch::NoisyQuadratic(spec.clone()), 0).unwrap();
    let batch = Batch::virtual_of_size(b);
    let exact = model.backward_grad(&batch, None).unwrap();
    let n = 10_000;
    let mut sum_sq = vec![0.0; spec.dims.len()];
    let mut sum = vec![0.0; spec.dims.len()];
    for seed in 0..n {
        let g = model.backward_grad(&batch, Some(seed)).unwrap();
        for (i, (gb, eb)) in g.iter().zip(&exact).enumerate() {
            for (x, e) in gb.iter().zip(eb) {
                sum[i] += x - e;
                sum_sq[i] += (x - e) * (x - e);
            }
        }
    }
    for i in 0..spec.dims.len() {
        let d = spec.dims[i] as f64;
        let samples = n as f64 * d;
        let mean = sum[i] / samples;
        let var = sum_sq[i] / samples - mean * mean;
        let want = spec.sigma[i] * spec.sigma[i] / (b as f64 * d);
        assert!((var / want - 1.0).abs() <= 0.05, "block {i}: variance {var} vs {want}");
    }
}

#[test]
fn losses_are_nonnegative() {
    for i in 0..GRADCHECK_INSTANCES {
        let mut r = rng(500 + i);
        let q = Model::init(Arch::NoisyQuadratic(random_quadratic(&mut r)), 0).unwrap();
        assert!(q.forward_loss(&Batch::virtual_of_size(4)).unwrap() >= 0.0);
        let arch = Arch::Mlp { sizes: vec![6, 5, 3] };
        let m = Model::init(arch, i).unwrap();
        assert!(m.forward_loss(&random_batch(&mut r, 5, 6, 3)).unwrap() >= 0.0);
    }
}

#[test]
fn full_size_lenet_on_sampled_coordinates() {
    let mut r = rng(600);
    let arch = Arch::LeNet(LeNetArch::default());
    let mut model = random_params(arch, &mut r);
    let batch = Batch {
        inputs: (0..2 * 784).map(|_| r.random_range(0.0..1.0)).collect(),
        input_dim: 784,
        labels: vec![3, 7],
        size: 2,
    };
    let analytic = model.backward_grad(&batch, None).unwrap();
    let h = DEFAULT_STEP;
    for b in 0..analytic.len() {
        let scale = analytic[b].iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for _ in 0..10 {
            let j = r.random_range(0..analytic[b].len());
            let orig = model.params().blocks()[b].values()[j];
            model.params_mut().blocks_mut()[b].values_mut()[j] = orig + h;
            let plus = model.forward_loss(&batch).unwrap();
            model.params_mut().blocks_mut()[b].values_mut()[j] = orig - h;
            let minus = model.forward_loss(&batch).unwrap();
            model.params_mut().blocks_mut()[b].values_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = (numeric - analytic[b][j]).abs() / scale.max(f64::MIN_POSITIVE);
            assert!(err <= NEURAL_TOLERANCE, "block {b}[{j}]: {} vs {numeric}", analytic[b][j]);
        }
    }
}
