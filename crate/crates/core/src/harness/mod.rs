//! Experiment wiring: configs, training runs, batch-size sweeps, the
//! convergence-rate check, gradient checks and the learning-rate grid
//! protocol.

mod config;
mod gradcheck;
pub mod protocol;
mod sweep;
mod theorem;
mod train;

pub use config::{DataSpec, Resolved, RunConfig, ScheduleConfig, TrainingSpec};
pub use gradcheck::{
    check_grad, check_model, compare_gradients, default_step, relative_error, tolerance_for, BlockError,
    GradCheckReport, DEFAULT_STEP, NEURAL_TOLERANCE, QUADRATIC_STEP, QUADRATIC_TOLERANCE,
};
pub use sweep::{derive_config, run_sweep, SweepEntry, SWEEP_CSV};
pub use theorem::{log_log_slope, run_theorem_check, TheoremOptimizer, TheoremRow, TheoremSettings, TheoremTable};
pub use train::{
    checkpoint_name, initial_model, load_checkpoint, run_training, EvalPoint, RunMetrics, FINAL_CHECKPOINT,
    METRICS_CSV, RESOLVED_CONFIG, TRUST_RATIO_CSV,
};
