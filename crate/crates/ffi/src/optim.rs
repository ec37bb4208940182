use std::ffi::c_char;

use lamb_core::optim::{Optimizer, OptimizerConfig, OptimizerKind, PhiFn, PhiMode};
use lamb_core::NormKind;

use crate::error::{c_str, guard, non_null, non_null_mut, slice, slice_mut, Fail, LambStatus};
use crate::params::LambParams;

// Enum-valued fields cross the boundary as `int32_t` and are checked on the
// way in, so a stray value from C is an error rather than undefined behavior.

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambOptimizerKind {
    Momentum = 0,
    Adagrad = 1,
    Adam = 2,
    AdamW = 3,
    Lars = 4,
    Lamb = 5,
    NLamb = 6,
    NnLamb = 7,
}

const KINDS: [OptimizerKind; 8] = [
    OptimizerKind::MomentumSgd,
    OptimizerKind::Adagrad,
    OptimizerKind::Adam,
    OptimizerKind::AdamW,
    OptimizerKind::Lars,
    OptimizerKind::Lamb,
    OptimizerKind::NLamb,
    OptimizerKind::NnLamb,
];

fn kind_from_raw(raw: i32) -> Result<OptimizerKind, Fail> {
    usize::try_from(raw)
        .ok()
        .and_then(|i| KINDS.get(i).copied())
        .ok_or_else(|| Fail::invalid(format!("unknown optimizer kind {raw}")))
}

fn kind_to_raw(kind: OptimizerKind) -> i32 {
    KINDS.iter().position(|k| *k == kind).unwrap() as i32
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambNormKind {
    L1 = 0,
    L2 = 1,
    LInf = 2,
}

impl LambNormKind {
    pub(crate) fn from_raw(raw: i32) -> Result<Self, Fail> {
        match raw {
            0 => Ok(Self::L1),
            1 => Ok(Self::L2),
            2 => Ok(Self::LInf),
            _ => Err(Fail::invalid(format!("unknown norm kind {raw}"))),
        }
    }
}

impl From<LambNormKind> for NormKind {
    fn from(k: LambNormKind) -> Self {
        match k {
            LambNormKind::L1 => NormKind::L1,
            LambNormKind::L2 => NormKind::L2,
            LambNormKind::LInf => NormKind::LInf,
        }
    }
}

fn norm_to_raw(kind: NormKind) -> i32 {
    match kind {
        NormKind::L1 => LambNormKind::L1 as i32,
        NormKind::L2 => LambNormKind::L2 as i32,
        NormKind::LInf => LambNormKind::LInf as i32,
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambPhiMode {
    /// `phi(z) = z`.
    Identity = 0,
    /// `phi(z) = min(max(z, gamma_l), gamma_u)`.
    Clip = 1,
}

/// Plain-data optimizer settings. Fill with
/// [`lamb_optimizer_config_default`] and override fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambOptimizerConfig {
    /// A `LambOptimizerKind` value.
    pub kind: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// A `LambPhiMode` value; `gamma_l` and `gamma_u` apply to `Clip` only.
    pub phi_mode: i32,
    pub gamma_l: f64,
    pub gamma_u: f64,
    /// A `LambNormKind` value.
    pub norm: i32,
    pub bias_correction: bool,
}

impl LambOptimizerConfig {
    fn from_core(c: &OptimizerConfig) -> Self {
        Self {
            kind: kind_to_raw(c.kind),
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
            weight_decay: c.weight_decay,
            phi_mode: match c.phi.mode {
                PhiMode::IdentityWithFallback => LambPhiMode::Identity as i32,
                PhiMode::Clip => LambPhiMode::Clip as i32,
            },
            gamma_l: c.phi.gamma_l,
            gamma_u: c.phi.gamma_u,
            norm: norm_to_raw(c.norm),
            bias_correction: c.bias_correction,
        }
    }

    fn to_core(self, decay_exempt: Vec<String>) -> Result<OptimizerConfig, Fail> {
        let phi = match self.phi_mode {
            0 => PhiFn::identity(),
            1 => PhiFn::clip(self.gamma_l, self.gamma_u)?,
            m => return Err(Fail::invalid(format!("unknown phi mode {m}"))),
        };
        let mut c = OptimizerConfig::new(kind_from_raw(self.kind)?);
        c.beta1 = self.beta1;
        c.beta2 = self.beta2;
        c.epsilon = self.epsilon;
        c.weight_decay = self.weight_decay;
        c.phi = phi;
        c.norm = LambNormKind::from_raw(self.norm)?.into();
        c.bias_correction = self.bias_correction;
        c.decay_exempt = decay_exempt;
        c.validate()?;
        Ok(c)
    }
}

/// Per-block diagnostics of one step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LambBlockTrace {
    pub param_norm: f64,
    pub update_norm: f64,
    pub trust_ratio: f64,
    pub effective_lr: f64,
}

/// An optimizer with its moment buffers, bound to one parameter layout.
pub struct LambOptimizer {
    inner: Optimizer,
}

/// Published defaults for `kind`: beta1 0.9, beta2 0.999, epsilon 1e-6,
/// weight decay 0.01, identity phi, L2 norm, bias correction on.
///
/// # Safety
/// `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn lamb_optimizer_config_default(kind: i32, out: *mut LambOptimizerConfig) -> LambStatus {
    guard(|| {
        let c = OptimizerConfig::new(kind_from_raw(kind)?);
        *non_null_mut(out, "out")? = LambOptimizerConfig::from_core(&c);
        Ok(())
    })
}

/// Creates an optimizer for the layout of `params`. `decay_exempt` lists
/// `n_exempt` block-name patterns (`*` wildcard) that get no weight decay;
/// it may be NULL when `n_exempt` is 0.
///
/// # Safety
/// `config` and `params` must be valid; `decay_exempt` must hold `n_exempt`
/// NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lamb_optimizer_new(
    config: *const LambOptimizerConfig,
    params: *const LambParams,
    decay_exempt: *const *const c_char,
    n_exempt: usize,
    out: *mut *mut LambOptimizer,
) -> LambStatus {
    guard(|| {
        let config = *non_null(config, "config")?;
        let params = non_null(params, "params")?.layered()?;
        let exempt = slice(decay_exempt, n_exempt, "decay_exempt")?
            .iter()
            .map(|p| c_str(*p, "decay_exempt entry").map(str::to_owned))
            .collect::<Result<Vec<_>, _>>()?;
        let inner = Optimizer::new(config.to_core(exempt)?, params)?;
        let out = non_null_mut(out, "out")?;
        *out = Box::into_raw(Box::new(LambOptimizer { inner }));
        Ok(())
    })
}

/// # Safety
/// `opt` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lamb_optimizer_free(opt: *mut LambOptimizer) {
    if !opt.is_null() {
        // SAFETY: allocated by `Box::into_raw` in `lamb_optimizer_new`.
        drop(unsafe { Box::from_raw(opt) });
    }
}

/// Applies one update to `params` in place using `grads` and learning rate
/// `eta`. When `trace` is not NULL it must hold at least one entry per block
/// (`trace_len`), and receives the per-block diagnostics.
///
/// On any error neither `params` nor the optimizer state changes.
///
/// # Safety
/// All handles must be live and `params` must not be the same handle as
/// `grads`; `trace` must point to `trace_len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn lamb_optimizer_step(
    opt: *mut LambOptimizer,
    params: *mut LambParams,
    grads: *const LambParams,
    eta: f64,
    trace: *mut LambBlockTrace,
    trace_len: usize,
) -> LambStatus {
    guard(|| {
        if std::ptr::eq(params.cast_const(), grads) {
            return Err(Fail::invalid("params and grads must be distinct handles"));
        }
        let opt = non_null_mut(opt, "opt")?;
        let grads = non_null(grads, "grads")?.layered()?;
        let params = non_null_mut(params, "params")?.layered_mut()?;
        let out = if trace.is_null() {
            None
        } else if trace_len < params.num_blocks() {
            return Err(Fail::invalid(format!("trace holds {trace_len} entries, need {}", params.num_blocks())));
        } else {
            Some(slice_mut(trace, trace_len, "trace")?)
        };
        let step = opt.inner.step(params, grads, eta)?;
        if let Some(out) = out {
            for (o, b) in out.iter_mut().zip(&step.blocks) {
                *o = LambBlockTrace {
                    param_norm: b.param_norm,
                    update_norm: b.update_norm,
                    trust_ratio: b.trust_ratio,
                    effective_lr: b.effective_lr,
                };
            }
        }
        Ok(())
    })
}

/// Number of steps taken so far.
///
/// # Safety
/// `opt` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lamb_optimizer_step_count(opt: *const LambOptimizer, out: *mut u64) -> LambStatus {
    guard(|| {
        let t = non_null(opt, "opt")?.inner.state().t;
        *non_null_mut(out, "out")? = t;
        Ok(())
    })
}
