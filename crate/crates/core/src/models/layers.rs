//! Hand-derived forward/backward kernels. Activations are row-major with the
//! sample index outermost; image tensors are NHWC so that a convolution is a
//! single matrix product over im2col rows.

/// `C = A·B + beta·C` where `A` is `m×k`, `B` is `k×n`. Transposed operands
/// are expressed through strides, so nothing is copied.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // Row-major `m×k` has strides (k, 1); its transpose read as `m×k` from a
    // stored `k×m` has strides (1, m).
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the length asserts above cover every index the strides reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y = x·Wᵀ + b` for `n` rows.
pub(crate) fn linear_forward(x: &[f64], w: &[f64], bias: &[f64], n: usize, d_in: usize, d_out: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(n * d_out);
    for _ in 0..n {
        y.extend_from_slice(bias);
    }
    gemm(n, d_in, d_out, x, false, w, true, 1.0, &mut y);
    y
}

/// Accumulates `gw += dyᵀ·x` and `gb += Σ dy`; returns `dx = dy·W` if asked.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    n: usize,
    d_in: usize,
    d_out: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    gemm(d_out, n, d_in, dy, true, x, false, 1.0, gw);
    for row in dy.chunks_exact(d_out) {
        for (g, d) in gb.iter_mut().zip(row) {
            *g += d;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![0.0; n * d_in];
        gemm(n, d_out, d_in, dy, false, w, false, 0.0, &mut dx);
        dx
    })
}

pub(crate) fn relu_in_place(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `dy` wherever the ReLU output was not positive.
pub(crate) fn relu_backward(out: &[f64], dy: &mut [f64]) {
    for (d, &o) in dy.iter_mut().zip(out) {
        if o <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Sum of per-row softmax cross-entropy and, optionally, its gradient with
/// respect to the logits divided by `scale`.
pub(crate) fn softmax_xent(
    logits: &[f64],
    labels: &[usize],
    classes: usize,
    scale: f64,
    want_grad: bool,
) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut grad = if want_grad { vec![0.0; logits.len()] } else { Vec::new() };
    for (r, (row, &y)) in logits.chunks_exact(classes).zip(labels).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[y];
        if want_grad {
            let g = &mut grad[r * classes..(r + 1) * classes];
            for (gc, z) in g.iter_mut().zip(row) {
                *gc = (z - log_z).exp() / scale;
            }
            g[y] -= 1.0 / scale;
        }
    }
    (total, grad)
}

pub(crate) fn argmax_rows(logits: &[f64], classes: usize) -> Vec<usize> {
    logits
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Geometry of a valid (no padding, stride 1) square convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv {
    pub side: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
}

impl Conv {
    pub fn out_side(&self) -> usize {
        self.side - self.k + 1
    }

    pub fn patch(&self) -> usize {
        self.k * self.k * self.c_in
    }

    /// Rows are output positions `(n, oy, ox)`, columns `(ky, kx, c)`.
    pub fn im2col(&self, x: &[f64], n: usize) -> Vec<f64> {
        let (s, o, c, k) = (self.side, self.out_side(), self.c_in, self.k);
        let mut cols = Vec::with_capacity(n * o * o * self.patch());
        for img in x.chunks_exact(s * s * c).take(n) {
            for oy in 0..o {
                for ox in 0..o {
                    for ky in 0..k {
                        let start = ((oy + ky) * s + ox) * c;
                        cols.extend_from_slice(&img[start..start + k * c]);
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of `im2col`.
    pub fn col2im(&self, cols: &[f64], n: usize) -> Vec<f64> {
        let (s, o, c, k) = (self.side, self.out_side(), self.c_in, self.k);
        let mut x = vec![0.0; n * s * s * c];
        let mut rows = cols.chunks_exact(self.patch());
        for img in x.chunks_exact_mut(s * s * c) {
            for oy in 0..o {
                for ox in 0..o {
                    let row = rows.next().expect("cols sized for n images");
                    for ky in 0..k {
                        let start = ((oy + ky) * s + ox) * c;
                        for (dst, src) in img[start..start + k * c].iter_mut().zip(&row[ky * k * c..(ky + 1) * k * c]) {
                            *dst += src;
                        }
                    }
                }
            }
        }
        x
    }
}

/// 2x2 max pooling with stride 2 on NHWC input of even side. Returns the
/// pooled tensor and, for each output, the flat input index that won (the
/// first maximum in scan order).
pub(crate) fn maxpool2(x: &[f64], n: usize, side: usize, c: usize) -> (Vec<f64>, Vec<usize>) {
    let half = side / 2;
    let mut out = Vec::with_capacity(n * half * half * c);
    let mut arg = Vec::with_capacity(out.capacity());
    for b in 0..n {
        let base = b * side * side * c;
        for py in 0..half {
            for px in 0..half {
                for ch in 0..c {
                    let mut best = base + ((2 * py) * side + 2 * px) * c + ch;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + ((2 * py + dy) * side + 2 * px + dx) * c + ch;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    arg.push(best);
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward(dy: &[f64], arg: &[usize], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&d, &i) in dy.iter().zip(arg) {
        dx[i] += d;
    }
    dx
}
