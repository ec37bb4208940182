//! Convergence-rate check on the noisy quadratic.
//!
//! For each horizon `T` the optimizer runs `T` steps with the constant rate
//! `η = sqrt(2 (f(x_1) − f*) / (γ_u² ‖L‖₁ T))`, batch size `b = T` (realized
//! exactly through the `σ_i² / b` noise variance), `β1 = 0` and no weight
//! decay. The stationarity measure is averaged over the iterates
//! `x_1 … x_T` and over seeds, then squared:
//!
//! * LARS: `(E[(1/√h) Σ_i ‖∇_i f(x_a)‖])²`
//! * LAMB with `β2 = 0`: `(E[(1/√d) ‖∇f(x_a)‖₁])²`

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::models::{Arch, Model, NoisyQuadraticSpec};
use crate::optim::{Optimizer, OptimizerConfig, OptimizerKind, PhiFn};
use crate::rng::{mix, seeded, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremOptimizer {
    Lars,
    Lamb,
}

impl std::str::FromStr for TheoremOptimizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lars" => Ok(Self::Lars),
            "lamb" => Ok(Self::Lamb),
            other => Err(Error::config(format!("theorem check supports lars|lamb, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremSettings {
    pub blocks: usize,
    pub block_dim: usize,
    /// Curvatures are log-spaced over `[l_min, l_max]`.
    pub l_min: f64,
    pub l_max: f64,
    pub sigma: f64,
    pub gamma_l: f64,
    pub gamma_u: f64,
    pub seeds: u64,
    pub base_seed: u64,
}

impl Default for TheoremSettings {
    fn default() -> Self {
        Self {
            blocks: 8,
            block_dim: 4,
            l_min: 1.0,
            l_max: 100.0,
            sigma: 1.0,
            gamma_l: 0.1,
            gamma_u: 10.0,
            seeds: 20,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremRow {
    pub horizon: u64,
    pub eta: f64,
    /// Squared mean over all iterates and seeds.
    pub criterion: f64,
    /// Squared mean over one uniformly drawn iterate per seed.
    pub criterion_sampled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremTable {
    pub optimizer: TheoremOptimizer,
    pub settings: TheoremSettings,
    pub rows: Vec<TheoremRow>,
    /// Least-squares slope of `ln criterion` against `ln T`.
    pub slope: f64,
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

impl TheoremSettings {
    pub fn problem(&self) -> Result<NoisyQuadraticSpec> {
        NoisyQuadraticSpec::log_spaced(self.blocks, self.block_dim, self.l_min, self.l_max, self.sigma)
    }

    pub fn optimizer(&self, which: TheoremOptimizer) -> Result<OptimizerConfig> {
        let mut c = OptimizerConfig::new(match which {
            TheoremOptimizer::Lars => OptimizerKind::Lars,
            TheoremOptimizer::Lamb => OptimizerKind::Lamb,
        });
        c.beta1 = 0.0;
        c.beta2 = 0.0;
        c.weight_decay = 0.0;
        c.phi = PhiFn::clip(self.gamma_l, self.gamma_u)?;
        c.validate()?;
        Ok(c)
    }
}

fn stationarity(which: TheoremOptimizer, grads: &[Vec<f64>]) -> f64 {
    match which {
        TheoremOptimizer::Lars => {
            let s: f64 = grads.iter().map(|g| crate::params::block_norm(g, crate::NormKind::L2)).sum();
            s / (grads.len() as f64).sqrt()
        }
        TheoremOptimizer::Lamb => {
            let d: usize = grads.iter().map(Vec::len).sum();
            let l1: f64 = grads.iter().flatten().map(|g| g.abs()).sum();
            l1 / (d as f64).sqrt()
        }
    }
}

pub fn run_theorem_check(which: TheoremOptimizer, grid: &[u64], settings: &TheoremSettings) -> Result<TheoremTable> {
    if grid.len() < 2 || grid.contains(&0) {
        return Err(Error::config("theorem grid needs at least two positive horizons"));
    }
    if settings.seeds == 0 {
        return Err(Error::config("theorem check needs at least one seed"));
    }
    let problem = settings.problem()?;
    let opt_cfg = settings.optimizer(which)?;
    let (l1, _) = problem.l1_and_max();
    let base = Model::init(Arch::NoisyQuadratic(problem), 0)?;
    let gap = base.forward_loss(&Batch::virtual_of_size(1))?;

    let mut rows = Vec::with_capacity(grid.len());
    for &t_max in grid {
        let eta = (2.0 * gap / (settings.gamma_u.powi(2) * l1 * t_max as f64)).sqrt();
        let batch = Batch::virtual_of_size(t_max as usize);
        let mut all_sum = 0.0;
        let mut picked_sum = 0.0;
        for s in 0..settings.seeds {
            let seed = mix(settings.base_seed, s);
            let pick = seeded(mix(seed, t_max), streams::ITERATE_PICK).random_range(1..=t_max);
            let mut model = base.clone();
            let mut opt = Optimizer::new(opt_cfg.clone(), model.params())?;
            let mut run_sum = 0.0;
            // Iterate x_t for t = 1..=T; x_T is measured but not stepped from.
            for t in 1..=t_max {
                let exact = model.backward_grad(&batch, None)?;
                let c = stationarity(which, &exact);
                run_sum += c;
                if t == pick {
                    picked_sum += c;
                }
                if t == t_max {
                    break;
                }
                let noisy = model.backward_grad(&batch, Some(mix(mix(seed, t_max), t)))?;
                let g = model.params().with_values(noisy)?;
                opt.step(model.params_mut(), &g, eta)?;
            }
            all_sum += run_sum / t_max as f64;
        }
        let n = settings.seeds as f64;
        rows.push(TheoremRow {
            horizon: t_max,
            eta,
            criterion: (all_sum / n).powi(2),
            criterion_sampled: (picked_sum / n).powi(2),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.horizon as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.criterion).collect();
    Ok(TheoremTable { optimizer: which, settings: settings.clone(), slope: log_log_slope(&xs, &ys), rows })
}

impl TheoremTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# optimizer={:?} seeds={} blocks={} block_dim={} L=[{}, {}] sigma={} phi=clip[{}, {}]",
            self.optimizer,
            self.settings.seeds,
            self.settings.blocks,
            self.settings.block_dim,
            self.settings.l_min,
            self.settings.l_max,
            self.settings.sigma,
            self.settings.gamma_l,
            self.settings.gamma_u,
        )?;
        writeln!(w, "# batch size b = T, realized as gradient-noise variance sigma_i^2 / T")?;
        writeln!(w, "# log-log slope = {}", self.slope)?;
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["T", "eta", "criterion", "criterion_sampled"])?;
        for r in &self.rows {
            wtr.write_record([
                r.horizon.to_string(),
                r.eta.to_string(),
                r.criterion.to_string(),
                r.criterion_sampled.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [1e2, 1e3, 1e4];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.7)).collect();
        assert!((log_log_slope(&xs, &ys) + 0.7).abs() < 1e-12);
    }

    #[test]
    fn noiseless_criterion_decreases() {
        let settings = TheoremSettings { sigma: 0.0, seeds: 2, ..TheoremSettings::default() };
        for which in [TheoremOptimizer::Lars, TheoremOptimizer::Lamb] {
            let t = run_theorem_check(which, &[10, 40, 160], &settings).unwrap();
            for w in t.rows.windows(2) {
                assert!(w[1].criterion < w[0].criterion, "{which:?}: {:?}", t.rows);
            }
        }
    }
}
