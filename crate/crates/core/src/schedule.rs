//! Learning-rate schedules and batch-size scaling rules.
//!
//! `lr_at` is evaluated before the optimizer step for step index
//! `t in [1, T]`; `t = 0` is the initialization point. Warmup ramps
//! linearly from zero to `base_lr` over `warmup_steps`, after which the
//! decay rule takes over from `base_lr`, so the curve is continuous at the
//! boundary. With no warmup the polynomial rule is exactly
//! `base_lr * (1 - t/T)`.
//!
//! Mixed-batch schedules split the run into stages. The first stage behaves
//! like a single-stage schedule over the full run. Every later stage
//! restarts a linear ramp from zero (re-warm-up) up to the global decay
//! curve and then follows it; a stage with no re-warm-up simply continues
//! the decay.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decay {
    /// `(1 - p)^power` where `p` runs from 0 to 1 after warmup.
    Polynomial {
        #[serde(default = "default_power")]
        power: f64,
    },
    /// Multiply by `factor` each time the step reaches `round(fraction * T)`.
    StepDecay {
        milestone_fractions: Vec<f64>,
        factor: f64,
    },
    Constant,
}

fn default_power() -> f64 {
    1.0
}

impl Default for Decay {
    fn default() -> Self {
        Decay::Polynomial { power: 1.0 }
    }
}

/// One stage of a mixed-batch schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub steps: u64,
    pub batch: usize,
    /// Warmup for the first stage, re-warm-up for later ones.
    pub warmup_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub base_lr: f64,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub decay: Decay,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<Stage>,
}

impl ScheduleSpec {
    pub fn polynomial(base_lr: f64, total_steps: u64, warmup_steps: u64) -> Result<Self> {
        Self { base_lr, total_steps, warmup_steps, decay: Decay::Polynomial { power: 1.0 }, stages: Vec::new() }
            .validated()
    }

    pub fn constant(base_lr: f64, total_steps: u64) -> Result<Self> {
        Self { base_lr, total_steps, warmup_steps: 0, decay: Decay::Constant, stages: Vec::new() }.validated()
    }

    /// Warmup over the first 5/90 of training, then x0.1 at 30/90, 60/90
    /// and 80/90 (the 90-epoch ImageNet recipe, rescaled to `total_steps`).
    pub fn goyal(base_lr: f64, total_steps: u64) -> Result<Self> {
        Self {
            base_lr,
            total_steps,
            warmup_steps: (total_steps as f64 * 5.0 / 90.0).round() as u64,
            decay: Decay::StepDecay { milestone_fractions: vec![30.0 / 90.0, 60.0 / 90.0, 80.0 / 90.0], factor: 0.1 },
            stages: Vec::new(),
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        // Zero is allowed: a run with no updates is a useful control.
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config(format!("base_lr must be finite and >= 0, got {}", self.base_lr)));
        }
        if self.total_steps == 0 {
            return Err(Error::config("total_steps must be positive"));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        match &self.decay {
            Decay::Polynomial { power } if !(*power > 0.0 && power.is_finite()) => {
                return Err(Error::config(format!("polynomial power must be positive, got {power}")));
            }
            Decay::StepDecay { milestone_fractions, factor } => {
                if !(*factor > 0.0 && factor.is_finite()) {
                    return Err(Error::config(format!("decay factor must be positive, got {factor}")));
                }
                let mut prev = 0.0;
                for &m in milestone_fractions {
                    if !(m > prev && m < 1.0) {
                        return Err(Error::config("milestone fractions must be strictly increasing in (0, 1)"));
                    }
                    prev = m;
                }
            }
            _ => {}
        }
        if !self.stages.is_empty() {
            let sum: u64 = self.stages.iter().map(|s| s.steps).sum();
            if sum != self.total_steps {
                return Err(Error::config(format!(
                    "stage steps sum to {sum}, expected total_steps {}",
                    self.total_steps
                )));
            }
            for s in &self.stages {
                if s.steps == 0 || s.batch == 0 {
                    return Err(Error::config("stages must have positive steps and batch"));
                }
                if s.warmup_steps > s.steps {
                    return Err(Error::config("stage warmup exceeds stage length"));
                }
            }
            if self.stages[0].warmup_steps != self.warmup_steps {
                return Err(Error::config("first stage warmup must equal warmup_steps"));
            }
        }
        Ok(())
    }

    /// Index of the stage containing `step` and the step at which it starts.
    pub fn stage_at(&self, step: u64) -> Option<(usize, u64)> {
        let mut start = 0;
        for (i, s) in self.stages.iter().enumerate() {
            let last = i + 1 == self.stages.len();
            if step < start + s.steps || last {
                return Some((i, start));
            }
            start += s.steps;
        }
        None
    }

    /// Post-warmup decay curve over the whole run.
    fn decayed(&self, step: u64) -> f64 {
        let w = self.warmup_steps;
        let span = self.total_steps - w;
        let progress = if span == 0 { 0.0 } else { step.saturating_sub(w) as f64 / span as f64 };
        match &self.decay {
            Decay::Polynomial { power } => {
                let rem = (1.0 - progress).max(0.0);
                if *power == 1.0 {
                    self.base_lr * rem
                } else {
                    self.base_lr * rem.powf(*power)
                }
            }
            Decay::StepDecay { milestone_fractions, factor } => {
                let passed = milestone_fractions
                    .iter()
                    .filter(|&&m| step >= (m * self.total_steps as f64).round() as u64)
                    .count();
                self.base_lr * factor.powi(passed as i32)
            }
            Decay::Constant => self.base_lr,
        }
    }

    fn single_stage(&self, step: u64) -> f64 {
        let w = self.warmup_steps;
        if step < w {
            self.base_lr * step as f64 / w as f64
        } else {
            self.decayed(step)
        }
    }
}

/// Learning rate for global step `step in [0, T]`.
pub fn lr_at(spec: &ScheduleSpec, step: u64) -> Result<f64> {
    if step > spec.total_steps {
        return Err(Error::StepOutOfRange { step, total: spec.total_steps });
    }
    let lr = match spec.stage_at(step) {
        None | Some((0, _)) => spec.single_stage(step),
        Some((i, start)) => {
            let rewarm = spec.stages[i].warmup_steps;
            let local = step - start;
            if local < rewarm {
                spec.decayed(start + rewarm) * local as f64 / rewarm as f64
            } else {
                spec.decayed(step)
            }
        }
    };
    Ok(lr)
}

/// Two-stage schedule; stage 2 ramps from zero again before decaying.
pub fn mixed_batch_schedule(base_lr: f64, stage1: Stage, stage2: Stage) -> Result<ScheduleSpec> {
    ScheduleSpec {
        base_lr,
        total_steps: stage1.steps + stage2.steps,
        warmup_steps: stage1.warmup_steps,
        decay: Decay::Polynomial { power: 1.0 },
        stages: vec![stage1, stage2],
    }
    .validated()
}

/// Square-root learning-rate scaling: `base_lr * sqrt(new_batch / base_batch)`.
pub fn sqrt_scale_lr(base_lr: f64, base_batch: usize, new_batch: usize) -> f64 {
    if new_batch == base_batch {
        return base_lr;
    }
    let q = new_batch as f64 / base_batch as f64;
    let s = q.sqrt();
    // Carry the rounding error of the square root into a single fused
    // multiply-add so the product is rounded once, not twice.
    let s_lo = (-s).mul_add(s, q) / (2.0 * s);
    base_lr.mul_add(s, base_lr * s_lo)
}

/// Linear-epoch warmup: the warmup fraction grows with the batch size so the
/// number of warmup epochs stays fixed. Capped at 1.
pub fn scale_warmup(base_warmup_fraction: f64, base_batch: usize, new_batch: usize) -> f64 {
    (base_warmup_fraction * (new_batch as f64 / base_batch as f64)).min(1.0)
}

/// Warmup length in one of the three units used in practice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warmup {
    Steps(u64),
    /// Fraction of the total number of steps.
    Ratio(f64),
    /// Epochs; converted with the run's steps per epoch.
    Epochs(f64),
}

impl Default for Warmup {
    fn default() -> Self {
        Warmup::Steps(0)
    }
}

impl Warmup {
    /// Warmup length in steps, rounded to the nearest step.
    pub fn to_steps(self, total_steps: u64, steps_per_epoch: u64) -> Result<u64> {
        let steps = match self {
            Warmup::Steps(s) => s,
            Warmup::Ratio(r) => {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::config(format!("warmup ratio must be in [0, 1], got {r}")));
                }
                (r * total_steps as f64).round() as u64
            }
            Warmup::Epochs(e) => {
                if !(e >= 0.0 && e.is_finite()) {
                    return Err(Error::config(format!("warmup epochs must be >= 0, got {e}")));
                }
                (e * steps_per_epoch as f64).round() as u64
            }
        };
        if steps > total_steps {
            return Err(Error::config(format!("warmup of {steps} steps exceeds total of {total_steps}")));
        }
        Ok(steps)
    }
}

/// Writes `step,lr` rows for every step in `[0, T]`.
pub fn write_schedule_csv<W: Write>(spec: &ScheduleSpec, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["step", "lr"])?;
    for step in 0..=spec.total_steps {
        wtr.write_record([step.to_string(), lr_at(spec, step)?.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
