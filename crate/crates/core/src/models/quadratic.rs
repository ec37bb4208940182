use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{LayeredParams, ParamBlock};
use crate::rng::{seeded, streams};

/// `f(x) = ½ Σ_i L_i ‖x_i − x*_i‖²` with optional Gaussian gradient noise.
///
/// The noise on block `i` is i.i.d. per coordinate with standard deviation
/// `σ_i / √(b·d_i)`, so its squared norm has expectation `σ_i² / b` for a
/// batch of size `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisyQuadraticSpec {
    pub dims: Vec<usize>,
    pub lipschitz: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Per-block optimum; zeros when omitted.
    #[serde(default)]
    pub optimum: Option<Vec<Vec<f64>>>,
    /// Every coordinate starts at `x* + init_offset`.
    #[serde(default = "default_offset")]
    pub init_offset: f64,
}

fn default_offset() -> f64 {
    1.0
}

impl NoisyQuadraticSpec {
    pub fn new(dims: Vec<usize>, lipschitz: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let spec = Self { dims, lipschitz, sigma, optimum: None, init_offset: default_offset() };
        spec.validate()?;
        Ok(spec)
    }

    /// `h` blocks of dimension `d` with curvatures log-spaced over
    /// `[l_min, l_max]` and a common noise level.
    pub fn log_spaced(h: usize, d: usize, l_min: f64, l_max: f64, sigma: f64) -> Result<Self> {
        let lipschitz = (0..h)
            .map(|i| {
                let f = if h == 1 { 0.0 } else { i as f64 / (h - 1) as f64 };
                l_min * (l_max / l_min).powf(f)
            })
            .collect();
        Self::new(vec![d; h], lipschitz, vec![sigma; h])
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.dims.len();
        if h == 0 || self.lipschitz.len() != h || self.sigma.len() != h {
            return Err(Error::config(format!(
                "quadratic needs matching non-empty dims/lipschitz/sigma, got {}/{}/{}",
                h,
                self.lipschitz.len(),
                self.sigma.len()
            )));
        }
        if let Some(&l) = self.lipschitz.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::config(format!("lipschitz constants must be > 0, got {l}")));
        }
        if let Some(&s) = self.sigma.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::config(format!("noise std must be >= 0, got {s}")));
        }
        if !self.init_offset.is_finite() {
            return Err(Error::config("init_offset must be finite"));
        }
        if let Some(opt) = &self.optimum {
            let ok = opt.len() == h && opt.iter().zip(&self.dims).all(|(o, &d)| o.len() == d);
            if !ok {
                return Err(Error::config("optimum must match block dims"));
            }
        }
        Ok(())
    }

    pub fn optimum(&self) -> Vec<Vec<f64>> {
        self.optimum.clone().unwrap_or_else(|| self.dims.iter().map(|&d| vec![0.0; d]).collect())
    }

    pub(crate) fn init(&self) -> Result<LayeredParams> {
        let blocks = self
            .optimum()
            .into_iter()
            .enumerate()
            .map(|(i, opt)| {
                let vals = opt.iter().map(|x| x + self.init_offset).collect();
                ParamBlock::new(format!("block{i}"), vec![opt.len()], vals)
            })
            .collect::<Result<Vec<_>>>()?;
        LayeredParams::new(blocks)
    }

    /// `Σ_i L_i` and `max_i L_i`.
    pub fn l1_and_max(&self) -> (f64, f64) {
        (self.lipschitz.iter().sum(), self.lipschitz.iter().copied().fold(0.0, f64::max))
    }

    pub(crate) fn loss(&self, params: &LayeredParams) -> f64 {
        let opt = self.optimum();
        params
            .blocks()
            .iter()
            .zip(&opt)
            .zip(&self.lipschitz)
            .map(|((b, o), l)| 0.5 * l * b.values().iter().zip(o).map(|(x, s)| (x - s) * (x - s)).sum::<f64>())
            .sum()
    }

    pub(crate) fn grad(&self, params: &LayeredParams, batch_size: usize, noise_seed: Option<u64>) -> Vec<Vec<f64>> {
        let opt = self.optimum();
        let mut rng = noise_seed.map(|s| seeded(s, streams::GRAD_NOISE));
        params
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let l = self.lipschitz[i];
                let std = self.sigma[i] / ((batch_size * b.len()) as f64).sqrt();
                let noise = Normal::new(0.0, std).expect("finite non-negative std");
                b.values()
                    .iter()
                    .zip(&opt[i])
                    .map(|(x, s)| {
                        let g = l * (x - s);
                        match rng.as_mut() {
                            Some(r) if std > 0.0 => g + noise.sample(r),
                            _ => g,
                        }
                    })
                    .collect()
            })
            .collect()
    }
}
