//! conv → ReLU → pool → conv → ReLU → pool → fc → ReLU → fc.
//!
//! Convolutions are valid (no padding) with stride 1 and weights stored as
//! `[c_out, k, k, c_in]`; pools are 2x2 max with stride 2. The flattened
//! feature order after the second pool is `(y, x, channel)`.

use serde::{Deserialize, Serialize};

use super::layers::{
    gemm, linear_backward, linear_forward, maxpool2, maxpool2_backward, relu_backward, relu_in_place, softmax_xent,
    Conv,
};
use super::{LossGrad, SHARD};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::params::LayeredParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeNetArch {
    pub in_side: usize,
    pub c1: usize,
    pub c2: usize,
    pub kernel: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Default for LeNetArch {
    /// 28x28 input, 6 and 16 channels of 5x5, 120 hidden units, 10 classes.
    fn default() -> Self {
        Self { in_side: 28, c1: 6, c2: 16, kernel: 5, hidden: 120, classes: 10 }
    }
}

impl LeNetArch {
    pub(crate) fn conv1(&self) -> Conv {
        Conv { side: self.in_side, c_in: 1, c_out: self.c1, k: self.kernel }
    }

    pub(crate) fn conv2(&self) -> Conv {
        Conv { side: self.conv1().out_side() / 2, c_in: self.c1, c_out: self.c2, k: self.kernel }
    }

    fn pooled2_side(&self) -> usize {
        self.conv2().out_side() / 2
    }

    pub fn flat_features(&self) -> usize {
        self.pooled2_side().pow(2) * self.c2
    }

    pub fn validate(&self) -> Result<()> {
        let nonzero = [self.in_side, self.c1, self.c2, self.kernel, self.hidden, self.classes].iter().all(|&v| v > 0);
        if !nonzero || self.classes < 2 {
            return Err(Error::config(format!("invalid LeNet arch {self:?}")));
        }
        let s1 = self.in_side.checked_sub(self.kernel).map(|v| v + 1);
        let Some(s1) = s1.filter(|s| s % 2 == 0 && *s > 0) else {
            return Err(Error::config("first conv output side must be even and positive"));
        };
        let s2 = (s1 / 2).checked_sub(self.kernel).map(|v| v + 1);
        if !s2.is_some_and(|s| s % 2 == 0 && s > 0) {
            return Err(Error::config("second conv output side must be even and positive"));
        }
        Ok(())
    }

    /// `(name, shape, fan_in)` for every block in order.
    pub(crate) fn blocks(&self) -> Vec<(&'static str, Vec<usize>, usize)> {
        let k = self.kernel;
        vec![
            ("conv1.weight", vec![self.c1, k, k, 1], k * k),
            ("conv1.bias", vec![self.c1], k * k),
            ("conv2.weight", vec![self.c2, k, k, self.c1], k * k * self.c1),
            ("conv2.bias", vec![self.c2], k * k * self.c1),
            ("fc1.weight", vec![self.hidden, self.flat_features()], self.flat_features()),
            ("fc1.bias", vec![self.hidden], self.flat_features()),
            ("fc2.weight", vec![self.classes, self.hidden], self.hidden),
            ("fc2.bias", vec![self.classes], self.hidden),
        ]
    }
}

/// Convolution as `cols·Wᵀ + b`, giving NHWC output.
fn conv_forward(conv: &Conv, cols: &[f64], w: &[f64], b: &[f64], rows: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * conv.c_out);
    for _ in 0..rows {
        y.extend_from_slice(b);
    }
    gemm(rows, conv.patch(), conv.c_out, cols, false, w, true, 1.0, &mut y);
    y
}

struct Forward {
    cols1: Vec<f64>,
    a1: Vec<f64>,
    arg1: Vec<usize>,
    cols2: Vec<f64>,
    a2: Vec<f64>,
    arg2: Vec<usize>,
    flat: Vec<f64>,
    h: Vec<f64>,
    logits: Vec<f64>,
}

fn forward(arch: &LeNetArch, params: &LayeredParams, x: &[f64], n: usize) -> Forward {
    let p = params.blocks();
    let (cv1, cv2) = (arch.conv1(), arch.conv2());
    let o1 = cv1.out_side();
    let cols1 = cv1.im2col(x, n);
    let mut a1 = conv_forward(&cv1, &cols1, p[0].values(), p[1].values(), n * o1 * o1);
    relu_in_place(&mut a1);
    let (pool1, arg1) = maxpool2(&a1, n, o1, arch.c1);

    let o2 = cv2.out_side();
    let cols2 = cv2.im2col(&pool1, n);
    let mut a2 = conv_forward(&cv2, &cols2, p[2].values(), p[3].values(), n * o2 * o2);
    relu_in_place(&mut a2);
    let (flat, arg2) = maxpool2(&a2, n, o2, arch.c2);

    let f = arch.flat_features();
    let mut h = linear_forward(&flat, p[4].values(), p[5].values(), n, f, arch.hidden);
    relu_in_place(&mut h);
    let logits = linear_forward(&h, p[6].values(), p[7].values(), n, arch.hidden, arch.classes);
    Forward { cols1, a1, arg1, cols2, a2, arg2, flat, h, logits }
}

pub(crate) fn logits(arch: &LeNetArch, params: &LayeredParams, x: &[f64], n: usize) -> Vec<f64> {
    forward(arch, params, x, n).logits
}

pub(crate) fn loss_grad(arch: &LeNetArch, params: &LayeredParams, batch: &Batch, want_grad: bool) -> LossGrad {
    let p = params.blocks();
    let total = batch.size as f64;
    let d_in = arch.in_side * arch.in_side;
    let (cv1, cv2) = (arch.conv1(), arch.conv2());
    let (o1, o2) = (cv1.out_side(), cv2.out_side());
    let f = arch.flat_features();
    let mut grads: Vec<Vec<f64>> = if want_grad { p.iter().map(|b| vec![0.0; b.len()]).collect() } else { Vec::new() };
    let mut loss = 0.0;
    for start in (0..batch.size).step_by(SHARD) {
        let n = SHARD.min(batch.size - start);
        let x = &batch.inputs[start * d_in..(start + n) * d_in];
        let labels = &batch.labels[start..start + n];
        let fw = forward(arch, params, x, n);
        let (shard_loss, dlogits) = softmax_xent(&fw.logits, labels, arch.classes, total, want_grad);
        loss += shard_loss;
        if !want_grad {
            continue;
        }
        let [g0, g1, g2, g3, g4, g5, g6, g7] = &mut grads[..] else { unreachable!("LeNet has eight blocks") };

        let mut dh = linear_backward(&fw.h, p[6].values(), &dlogits, n, arch.hidden, arch.classes, g6, g7, true)
            .expect("requested");
        relu_backward(&fw.h, &mut dh);
        let dflat = linear_backward(&fw.flat, p[4].values(), &dh, n, f, arch.hidden, g4, g5, true).expect("requested");

        let mut da2 = maxpool2_backward(&dflat, &fw.arg2, fw.a2.len());
        relu_backward(&fw.a2, &mut da2);
        let rows2 = n * o2 * o2;
        gemm(arch.c2, rows2, cv2.patch(), &da2, true, &fw.cols2, false, 1.0, g2);
        for row in da2.chunks_exact(arch.c2) {
            for (g, d) in g3.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dcols2 = vec![0.0; rows2 * cv2.patch()];
        gemm(rows2, arch.c2, cv2.patch(), &da2, false, p[2].values(), false, 0.0, &mut dcols2);
        let dpool1 = cv2.col2im(&dcols2, n);

        let mut da1 = maxpool2_backward(&dpool1, &fw.arg1, fw.a1.len());
        relu_backward(&fw.a1, &mut da1);
        let rows1 = n * o1 * o1;
        gemm(arch.c1, rows1, cv1.patch(), &da1, true, &fw.cols1, false, 1.0, g0);
        for row in da1.chunks_exact(arch.c1) {
            for (g, d) in g1.iter_mut().zip(row) {
                *g += d;
            }
        }
    }
    LossGrad { loss: loss / total, grads }
}
