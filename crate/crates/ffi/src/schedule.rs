use lamb_core::schedule::Decay;
use lamb_core::{lr_at, scale_warmup, sqrt_scale_lr, ScheduleSpec};

use crate::error::{guard, non_null, non_null_mut, Fail, LambStatus};

/// A learning-rate schedule over steps `0..=total_steps`.
pub struct LambSchedule {
    inner: ScheduleSpec,
}

fn boxed(out: *mut *mut LambSchedule, inner: ScheduleSpec) -> Result<(), Fail> {
    let out = non_null_mut(out, "out")?;
    *out = Box::into_raw(Box::new(LambSchedule { inner }));
    Ok(())
}

/// Linear warmup from 0 over `warmup_steps`, then `(1 - p)^power` decay to
/// 0 at `total_steps`.
///
/// # Safety
/// `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn lamb_schedule_polynomial(
    base_lr: f64,
    total_steps: u64,
    warmup_steps: u64,
    power: f64,
    out: *mut *mut LambSchedule,
) -> LambStatus {
    guard(|| {
        let mut spec = ScheduleSpec::polynomial(base_lr, total_steps, warmup_steps)?;
        spec.decay = Decay::Polynomial { power };
        boxed(out, spec.validated()?)
    })
}

/// # Safety
/// `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn lamb_schedule_constant(
    base_lr: f64,
    total_steps: u64,
    out: *mut *mut LambSchedule,
) -> LambStatus {
    guard(|| boxed(out, ScheduleSpec::constant(base_lr, total_steps)?))
}

/// # Safety
/// `schedule` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lamb_schedule_free(schedule: *mut LambSchedule) {
    if !schedule.is_null() {
        // SAFETY: allocated by `Box::into_raw` in this module.
        drop(unsafe { Box::from_raw(schedule) });
    }
}

/// Learning rate at `step`; `LAMB_STATUS_STEP_OUT_OF_RANGE` past the end.
///
/// # Safety
/// `schedule` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lamb_schedule_lr_at(schedule: *const LambSchedule, step: u64, out: *mut f64) -> LambStatus {
    guard(|| {
        let lr = lr_at(&non_null(schedule, "schedule")?.inner, step)?;
        *non_null_mut(out, "out")? = lr;
        Ok(())
    })
}

/// # Safety
/// `schedule` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lamb_schedule_total_steps(schedule: *const LambSchedule, out: *mut u64) -> LambStatus {
    guard(|| {
        let total = non_null(schedule, "schedule")?.inner.total_steps;
        *non_null_mut(out, "out")? = total;
        Ok(())
    })
}

/// `base_lr * sqrt(new_batch / base_batch)`, rounded once. NaN when either
/// batch is 0.
#[no_mangle]
pub extern "C" fn lamb_sqrt_scale_lr(base_lr: f64, base_batch: usize, new_batch: usize) -> f64 {
    if base_batch == 0 || new_batch == 0 {
        return f64::NAN;
    }
    sqrt_scale_lr(base_lr, base_batch, new_batch)
}

/// Warmup fraction grown in proportion to the batch size, capped at 1.
/// NaN when either batch is 0.
#[no_mangle]
pub extern "C" fn lamb_scale_warmup(base_fraction: f64, base_batch: usize, new_batch: usize) -> f64 {
    if base_batch == 0 || new_batch == 0 {
        return f64::NAN;
    }
    scale_warmup(base_fraction, base_batch, new_batch)
}
