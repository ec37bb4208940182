#ifndef LAMB_H
#define LAMB_H

/* Generated by cbindgen from crates/ffi/src. Do not edit by hand. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum LambNormKind {
  LAMB_NORM_KIND_L1 = 0,
  LAMB_NORM_KIND_L2 = 1,
  LAMB_NORM_KIND_L_INF = 2,
} LambNormKind;

typedef enum LambOptimizerKind {
  LAMB_OPTIMIZER_KIND_MOMENTUM = 0,
  LAMB_OPTIMIZER_KIND_ADAGRAD = 1,
  LAMB_OPTIMIZER_KIND_ADAM = 2,
  LAMB_OPTIMIZER_KIND_ADAM_W = 3,
  LAMB_OPTIMIZER_KIND_LARS = 4,
  LAMB_OPTIMIZER_KIND_LAMB = 5,
  LAMB_OPTIMIZER_KIND_N_LAMB = 6,
  LAMB_OPTIMIZER_KIND_NN_LAMB = 7,
} LambOptimizerKind;

typedef enum LambPhiMode {
  // `phi(z) = z`.
  LAMB_PHI_MODE_IDENTITY = 0,
  // `phi(z) = min(max(z, gamma_l), gamma_u)`.
  LAMB_PHI_MODE_CLIP = 1,
} LambPhiMode;

// Result code of every fallible call.
typedef enum LambStatus {
  LAMB_STATUS_OK = 0,
  // A required pointer argument was NULL.
  LAMB_STATUS_NULL_POINTER = 1,
  // An argument was out of range: bad enum value, index, length or UTF-8.
  LAMB_STATUS_INVALID_ARGUMENT = 2,
  LAMB_STATUS_CONFIG_INVALID = 3,
  LAMB_STATUS_SHAPE_MISMATCH = 4,
  LAMB_STATUS_NON_FINITE = 5,
  LAMB_STATUS_STEP_OUT_OF_RANGE = 6,
  // Checkpoint could not be read or written.
  LAMB_STATUS_IO = 7,
  LAMB_STATUS_PANIC = 99,
} LambStatus;

// An optimizer with its moment buffers, bound to one parameter layout.
typedef struct LambOptimizer LambOptimizer;

// Ordered set of named parameter blocks. Also used for gradients.
typedef struct LambParams LambParams;

// A learning-rate schedule over steps `0..=total_steps`.
typedef struct LambSchedule LambSchedule;

// Plain-data optimizer settings. Fill with
// [`lamb_optimizer_config_default`] and override fields as needed.
typedef struct LambOptimizerConfig {
  // A `LambOptimizerKind` value.
  int32_t kind;
  double beta1;
  double beta2;
  double epsilon;
  double weight_decay;
  // A `LambPhiMode` value; `gamma_l` and `gamma_u` apply to `Clip` only.
  int32_t phi_mode;
  double gamma_l;
  double gamma_u;
  // A `LambNormKind` value.
  int32_t norm;
  bool bias_correction;
} LambOptimizerConfig;

// Per-block diagnostics of one step.
typedef struct LambBlockTrace {
  double param_norm;
  double update_norm;
  double trust_ratio;
  double effective_lr;
} LambBlockTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *lamb_version(void);

// Message of the last failed call on this thread, or an empty string.
//
// The pointer stays valid until the next failing call on the same thread.
const char *lamb_last_error_message(void);

// Static name of a status code, e.g. `"ShapeMismatch"`; `"Unknown"` for
// values outside the enum. Takes a plain integer so any value is safe.
const char *lamb_status_name(int32_t status);

// Published defaults for `kind`: beta1 0.9, beta2 0.999, epsilon 1e-6,
// weight decay 0.01, identity phi, L2 norm, bias correction on.
//
// # Safety
// `out` must be NULL or writable.
enum LambStatus lamb_optimizer_config_default(int32_t kind, struct LambOptimizerConfig *out);

// Creates an optimizer for the layout of `params`. `decay_exempt` lists
// `n_exempt` block-name patterns (`*` wildcard) that get no weight decay;
// it may be NULL when `n_exempt` is 0.
//
// # Safety
// `config` and `params` must be valid; `decay_exempt` must hold `n_exempt`
// NUL-terminated strings; `out` must be writable.
enum LambStatus lamb_optimizer_new(const struct LambOptimizerConfig *config,
                                   const struct LambParams *params,
                                   const char *const *decay_exempt,
                                   size_t n_exempt,
                                   struct LambOptimizer **out);

// # Safety
// `opt` must be NULL or a handle from this library not yet freed.
void lamb_optimizer_free(struct LambOptimizer *opt);

// Applies one update to `params` in place using `grads` and learning rate
// `eta`. When `trace` is not NULL it must hold at least one entry per block
// (`trace_len`), and receives the per-block diagnostics.
//
// On any error neither `params` nor the optimizer state changes.
//
// # Safety
// All handles must be live and `params` must not be the same handle as
// `grads`; `trace` must point to `trace_len` writable entries.
enum LambStatus lamb_optimizer_step(struct LambOptimizer *opt,
                                    struct LambParams *params,
                                    const struct LambParams *grads,
                                    double eta,
                                    struct LambBlockTrace *trace,
                                    size_t trace_len);

// Number of steps taken so far.
//
// # Safety
// `opt` must be a live handle; `out` must be writable.
enum LambStatus lamb_optimizer_step_count(const struct LambOptimizer *opt, uint64_t *out);

// Creates an empty parameter set in `*out`.
//
// # Safety
// `out` must be NULL or point to writable storage for one pointer.
enum LambStatus lamb_params_new(struct LambParams **out);

// Deep copy of `params` in `*out`.
//
// # Safety
// `params` must be NULL or a live handle; `out` as in [`lamb_params_new`].
enum LambStatus lamb_params_clone(const struct LambParams *params, struct LambParams **out);

// # Safety
// `params` must be NULL or a handle from this library not yet freed.
void lamb_params_free(struct LambParams *params);

// Appends a block named `name` with the given row-major `shape` and
// `len` values. `len` must equal the product of `shape`.
//
// # Safety
// `name` must be NUL-terminated; `shape` and `values` must point to `ndim`
// and `len` elements.
enum LambStatus lamb_params_push_block(struct LambParams *params,
                                       const char *name,
                                       const size_t *shape,
                                       size_t ndim,
                                       const double *values,
                                       size_t len);

// # Safety
// `params` must be a live handle; `out` must be writable.
enum LambStatus lamb_params_num_blocks(const struct LambParams *params, size_t *out);

// Number of values in block `index`.
//
// # Safety
// `params` must be a live handle; `out` must be writable.
enum LambStatus lamb_params_block_len(const struct LambParams *params, size_t index, size_t *out);

// Copies block `index` into `out`, which holds exactly `len` values.
//
// # Safety
// `out` must point to `len` writable doubles.
enum LambStatus lamb_params_read(const struct LambParams *params,
                                 size_t index,
                                 double *out,
                                 size_t len);

// Overwrites block `index` with `len` finite values.
//
// # Safety
// `values` must point to `len` readable doubles.
enum LambStatus lamb_params_write(struct LambParams *params,
                                  size_t index,
                                  const double *values,
                                  size_t len);

// Norm of block `index`.
//
// # Safety
// `params` must be a live handle; `out` must be writable.
enum LambStatus lamb_params_block_norm(const struct LambParams *params,
                                       size_t index,
                                       int32_t norm,
                                       double *out);

// Writes a checkpoint file readable by [`lamb_params_load`] and the CLI.
//
// # Safety
// `path` must be NUL-terminated.
enum LambStatus lamb_params_save(const struct LambParams *params, const char *path);

// # Safety
// `path` must be NUL-terminated; `out` as in [`lamb_params_new`].
enum LambStatus lamb_params_load(const char *path, struct LambParams **out);

// Linear warmup from 0 over `warmup_steps`, then `(1 - p)^power` decay to
// 0 at `total_steps`.
//
// # Safety
// `out` must be NULL or writable.
enum LambStatus lamb_schedule_polynomial(double base_lr,
                                         uint64_t total_steps,
                                         uint64_t warmup_steps,
                                         double power,
                                         struct LambSchedule **out);

// # Safety
// `out` must be NULL or writable.
enum LambStatus lamb_schedule_constant(double base_lr,
                                       uint64_t total_steps,
                                       struct LambSchedule **out);

// # Safety
// `schedule` must be NULL or a handle from this library not yet freed.
void lamb_schedule_free(struct LambSchedule *schedule);

// Learning rate at `step`; `LAMB_STATUS_STEP_OUT_OF_RANGE` past the end.
//
// # Safety
// `schedule` must be a live handle; `out` must be writable.
enum LambStatus lamb_schedule_lr_at(const struct LambSchedule *schedule,
                                    uint64_t step,
                                    double *out);

// # Safety
// `schedule` must be a live handle; `out` must be writable.
enum LambStatus lamb_schedule_total_steps(const struct LambSchedule *schedule, uint64_t *out);

// `base_lr * sqrt(new_batch / base_batch)`, rounded once. NaN when either
// batch is 0.
double lamb_sqrt_scale_lr(double base_lr, size_t base_batch, size_t new_batch);

// Warmup fraction grown in proportion to the batch size, capped at 1.
// NaN when either batch is 0.
double lamb_scale_warmup(double base_fraction, size_t base_batch, size_t new_batch);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAMB_H */
