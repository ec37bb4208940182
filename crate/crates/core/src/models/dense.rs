//! Fully connected ReLU networks. Logistic regression is the zero-hidden-layer
//! case with its own block names.

use super::layers::{linear_backward, linear_forward, relu_backward, relu_in_place, softmax_xent};
use super::{LossGrad, SHARD};
use crate::data::Batch;
use crate::params::LayeredParams;

/// Logits for `n` rows of `x`. `sizes` runs from input width to class count.
pub(crate) fn logits(params: &LayeredParams, sizes: &[usize], x: &[f64], n: usize) -> Vec<f64> {
    let blocks = params.blocks();
    let mut h = x.to_vec();
    let layers = sizes.len() - 1;
    for l in 0..layers {
        h = linear_forward(&h, blocks[2 * l].values(), blocks[2 * l + 1].values(), n, sizes[l], sizes[l + 1]);
        if l + 1 < layers {
            relu_in_place(&mut h);
        }
    }
    h
}

pub(crate) fn loss_grad(params: &LayeredParams, sizes: &[usize], batch: &Batch, want_grad: bool) -> LossGrad {
    let blocks = params.blocks();
    let layers = sizes.len() - 1;
    let classes = sizes[layers];
    let total = batch.size as f64;
    let mut grads: Vec<Vec<f64>> =
        if want_grad { blocks.iter().map(|b| vec![0.0; b.len()]).collect() } else { Vec::new() };
    let mut loss = 0.0;
    let d_in = sizes[0];
    for start in (0..batch.size).step_by(SHARD) {
        let n = SHARD.min(batch.size - start);
        let x = &batch.inputs[start * d_in..(start + n) * d_in];
        let labels = &batch.labels[start..start + n];
        // acts[l] is the input to layer l.
        let mut acts = vec![x.to_vec()];
        for l in 0..layers {
            let mut h =
                linear_forward(&acts[l], blocks[2 * l].values(), blocks[2 * l + 1].values(), n, sizes[l], sizes[l + 1]);
            if l + 1 < layers {
                relu_in_place(&mut h);
            }
            acts.push(h);
        }
        let (shard_loss, mut dy) = softmax_xent(&acts[layers], labels, classes, total, want_grad);
        loss += shard_loss;
        if !want_grad {
            continue;
        }
        for l in (0..layers).rev() {
            let (gw, rest) = grads.split_at_mut(2 * l + 1);
            let dx = linear_backward(
                &acts[l],
                blocks[2 * l].values(),
                &dy,
                n,
                sizes[l],
                sizes[l + 1],
                &mut gw[2 * l],
                &mut rest[0],
                l > 0,
            );
            if let Some(mut dx) = dx {
                relu_backward(&acts[l], &mut dx);
                dy = dx;
            }
        }
    }
    LossGrad { loss: loss / total, grads }
}
