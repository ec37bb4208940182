//! C ABI over `lamb_core`.
//!
//! Every fallible function returns a [`LambStatus`] and writes results
//! through out-pointers. On failure a message is kept per thread and can be
//! read with [`lamb_last_error_message`]. Handles are opaque; each `*_new`
//! or `*_load` has a matching `*_free`, and freeing NULL is a no-op.
//!
//! Panics never cross the boundary: they are caught and reported as
//! `LAMB_STATUS_PANIC`.

mod error;
mod optim;
mod params;
mod schedule;

pub use error::{lamb_last_error_message, lamb_status_name, LambStatus};
pub use optim::{
    lamb_optimizer_config_default, lamb_optimizer_free, lamb_optimizer_new, lamb_optimizer_step,
    lamb_optimizer_step_count, LambBlockTrace, LambNormKind, LambOptimizer, LambOptimizerConfig, LambOptimizerKind,
    LambPhiMode,
};
pub use params::{
    lamb_params_block_len, lamb_params_block_norm, lamb_params_clone, lamb_params_free, lamb_params_load,
    lamb_params_new, lamb_params_num_blocks, lamb_params_push_block, lamb_params_read, lamb_params_save,
    lamb_params_write, LambParams,
};
pub use schedule::{
    lamb_scale_warmup, lamb_schedule_constant, lamb_schedule_free, lamb_schedule_lr_at, lamb_schedule_polynomial,
    lamb_schedule_total_steps, lamb_sqrt_scale_lr, LambSchedule,
};

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lamb_version() -> *const std::ffi::c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
