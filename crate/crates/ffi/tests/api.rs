//! The C API driven from Rust: results match the core crate bit for bit and
//! every misuse comes back as a status code.

use std::ffi::{CStr, CString};
use std::ptr;

use lamb_core::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use lamb_core::{LayeredParams, ParamBlock};
use lamb_ffi::*;

const LAMB: i32 = LambOptimizerKind::Lamb as i32;

fn last_error() -> String {
    unsafe { CStr::from_ptr(lamb_last_error_message()) }.to_string_lossy().into_owned()
}

fn ok(status: LambStatus) {
    assert_eq!(status, LambStatus::Ok, "{}", last_error());
}

struct Blocks(Vec<(&'static str, Vec<usize>, Vec<f64>)>);

impl Blocks {
    fn sample(scale: f64) -> Self {
        Blocks(vec![
            ("fc.weight", vec![2, 3], [0.5, -1.0, 2.0, 0.25, -0.75, 1.5].iter().map(|v| v * scale).collect()),
            ("fc.bias", vec![3], [0.1, -0.2, 0.3].iter().map(|v| v * scale).collect()),
        ])
    }

    fn handle(&self) -> *mut LambParams {
        let mut p = ptr::null_mut();
        unsafe {
            ok(lamb_params_new(&mut p));
            for (name, shape, values) in &self.0 {
                let name = CString::new(*name).unwrap();
                ok(lamb_params_push_block(
                    p,
                    name.as_ptr(),
                    shape.as_ptr(),
                    shape.len(),
                    values.as_ptr(),
                    values.len(),
                ));
            }
        }
        p
    }

    fn layered(&self) -> LayeredParams {
        LayeredParams::new(self.0.iter().map(|(n, s, v)| ParamBlock::new(*n, s.clone(), v.clone()).unwrap()).collect())
            .unwrap()
    }
}

fn read_all(p: *const LambParams) -> Vec<Vec<f64>> {
    let mut n = 0;
    unsafe { ok(lamb_params_num_blocks(p, &mut n)) };
    (0..n)
        .map(|i| {
            let mut len = 0;
            unsafe { ok(lamb_params_block_len(p, i, &mut len)) };
            let mut buf = vec![0.0; len];
            unsafe { ok(lamb_params_read(p, i, buf.as_mut_ptr(), len)) };
            buf
        })
        .collect()
}

#[test]
fn steps_match_the_core_optimizer_bitwise() {
    let x0 = Blocks::sample(1.0);
    let g = Blocks::sample(0.3);
    for kind in 0..8 {
        let mut cfg = LambOptimizerConfig { kind, ..unsafe { default_config(kind) } };
        cfg.weight_decay = 0.01;
        let exempt = CString::new("*.bias").unwrap();
        let exempt_list = [exempt.as_ptr()];

        let x = x0.handle();
        let gh = g.handle();
        let mut opt = ptr::null_mut();
        unsafe { ok(lamb_optimizer_new(&cfg, x, exempt_list.as_ptr(), 1, &mut opt)) };

        let core_kind = OptimizerKind::ALL[kind as usize];
        let mut core_cfg = OptimizerConfig::new(core_kind);
        core_cfg.decay_exempt = vec!["*.bias".into()];
        let mut xc = x0.layered();
        let mut core = Optimizer::new(core_cfg, &xc).unwrap();

        let mut trace = [LambBlockTrace::default(); 2];
        for t in 0..5 {
            let eta = 0.01 * (t + 1) as f64;
            unsafe { ok(lamb_optimizer_step(opt, x, gh, eta, trace.as_mut_ptr(), trace.len())) };
            let ct = core.step(&mut xc, &g.layered(), eta).unwrap();
            for (a, b) in trace.iter().zip(&ct.blocks) {
                assert_eq!(a.trust_ratio.to_bits(), b.trust_ratio.to_bits());
                assert_eq!(a.effective_lr.to_bits(), b.effective_lr.to_bits());
            }
        }
        let want: Vec<Vec<f64>> = xc.blocks().iter().map(|b| b.values().to_vec()).collect();
        assert_eq!(read_all(x), want, "kind {kind}");
        let mut t = 0;
        unsafe { ok(lamb_optimizer_step_count(opt, &mut t)) };
        assert_eq!(t, 5);
        unsafe {
            lamb_optimizer_free(opt);
            lamb_params_free(gh);
            lamb_params_free(x);
        }
    }
}

unsafe fn default_config(kind: i32) -> LambOptimizerConfig {
    let mut c = std::mem::MaybeUninit::uninit();
    ok(lamb_optimizer_config_default(kind, c.as_mut_ptr()));
    c.assume_init()
}

#[test]
fn defaults_are_the_published_ones() {
    let c = unsafe { default_config(LAMB) };
    assert_eq!((c.beta1, c.beta2, c.epsilon, c.weight_decay), (0.9, 0.999, 1e-6, 0.01));
    assert_eq!(c.phi_mode, LambPhiMode::Identity as i32);
    assert_eq!(c.norm, LambNormKind::L2 as i32);
    assert!(c.bias_correction);
}

#[test]
fn misuse_is_reported_not_fatal() {
    let x = Blocks::sample(1.0).handle();
    let mut buf = [0.0; 6];
    unsafe {
        assert_eq!(lamb_params_read(ptr::null(), 0, buf.as_mut_ptr(), 6), LambStatus::NullPointer);
        assert!(last_error().contains("params"));
        assert_eq!(lamb_params_read(x, 9, buf.as_mut_ptr(), 6), LambStatus::InvalidArgument);
        assert_eq!(lamb_params_read(x, 0, buf.as_mut_ptr(), 5), LambStatus::ShapeMismatch);
        assert_eq!(lamb_params_block_norm(x, 0, 7, buf.as_mut_ptr()), LambStatus::InvalidArgument);

        let nan = [f64::NAN; 6];
        assert_eq!(lamb_params_write(x, 0, nan.as_ptr(), 6), LambStatus::NonFinite);

        let dup = CString::new("fc.bias").unwrap();
        let shape = [1usize];
        assert_eq!(
            lamb_params_push_block(x, dup.as_ptr(), shape.as_ptr(), 1, buf.as_ptr(), 1),
            LambStatus::ShapeMismatch
        );
        assert!(last_error().contains("duplicate"));

        let mut opt = ptr::null_mut();
        let mut cfg = default_config(LAMB);
        cfg.kind = 42;
        assert_eq!(lamb_optimizer_new(&cfg, x, ptr::null(), 0, &mut opt), LambStatus::InvalidArgument);
        cfg = default_config(LAMB);
        cfg.beta1 = 1.5;
        assert_eq!(lamb_optimizer_new(&cfg, x, ptr::null(), 0, &mut opt), LambStatus::ConfigInvalid);
        cfg = default_config(LAMB);
        cfg.phi_mode = LambPhiMode::Clip as i32;
        cfg.gamma_l = 2.0;
        cfg.gamma_u = 1.0;
        assert_eq!(lamb_optimizer_new(&cfg, x, ptr::null(), 0, &mut opt), LambStatus::ConfigInvalid);
        assert!(opt.is_null());

        let mut empty = ptr::null_mut();
        ok(lamb_params_new(&mut empty));
        assert_eq!(
            lamb_optimizer_new(&default_config(LAMB), empty, ptr::null(), 0, &mut opt),
            LambStatus::ShapeMismatch
        );
        lamb_params_free(empty);
        lamb_params_free(ptr::null_mut());
        lamb_params_free(x);
    }
}

#[test]
fn failed_step_changes_nothing() {
    let x0 = Blocks::sample(1.0);
    let x = x0.handle();
    let mut wrong = Blocks::sample(1.0);
    wrong.0[1].0 = "other.bias";
    let g = wrong.handle();
    let good = Blocks::sample(0.5).handle();
    let mut opt = ptr::null_mut();
    let mut trace = [LambBlockTrace::default(); 1];
    unsafe {
        ok(lamb_optimizer_new(&default_config(LAMB), x, ptr::null(), 0, &mut opt));
        assert_eq!(lamb_optimizer_step(opt, x, g, 0.1, ptr::null_mut(), 0), LambStatus::ShapeMismatch);
        assert_eq!(lamb_optimizer_step(opt, x, good, f64::NAN, ptr::null_mut(), 0), LambStatus::ConfigInvalid);
        assert_eq!(lamb_optimizer_step(opt, x, good, 0.1, trace.as_mut_ptr(), 1), LambStatus::InvalidArgument);
        assert_eq!(lamb_optimizer_step(opt, x, x, 0.1, ptr::null_mut(), 0), LambStatus::InvalidArgument);
        let mut t = 9;
        ok(lamb_optimizer_step_count(opt, &mut t));
        assert_eq!(t, 0);
        assert_eq!(read_all(x), x0.0.iter().map(|b| b.2.clone()).collect::<Vec<_>>());
        lamb_optimizer_free(opt);
        for p in [x, g, good] {
            lamb_params_free(p);
        }
    }
}

#[test]
fn errors_are_per_thread() {
    unsafe { assert_eq!(lamb_params_num_blocks(ptr::null(), ptr::null_mut()), LambStatus::NullPointer) };
    assert!(!last_error().is_empty());
    let other = std::thread::spawn(last_error).join().unwrap();
    assert_eq!(other, "");
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("p.lpv").to_str().unwrap()).unwrap();
    let x = Blocks::sample(1.0).handle();
    let mut copy = ptr::null_mut();
    let mut loaded = ptr::null_mut();
    unsafe {
        ok(lamb_params_clone(x, &mut copy));
        ok(lamb_params_save(x, path.as_ptr()));
        ok(lamb_params_load(path.as_ptr(), &mut loaded));
        assert_eq!(read_all(loaded), read_all(x));
        assert_eq!(read_all(copy), read_all(x));
        let missing = CString::new(dir.path().join("absent").to_str().unwrap()).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(lamb_params_load(missing.as_ptr(), &mut none), LambStatus::Io);
        for p in [x, copy, loaded] {
            lamb_params_free(p);
        }
    }
}

#[test]
fn block_norms() {
    let x = Blocks::sample(1.0).handle();
    let mut n = 0.0;
    unsafe {
        ok(lamb_params_block_norm(x, 1, LambNormKind::L1 as i32, &mut n));
        assert_eq!(n, 0.1 + 0.2 + 0.3);
        ok(lamb_params_block_norm(x, 0, LambNormKind::LInf as i32, &mut n));
        assert_eq!(n, 2.0);
        lamb_params_free(x);
    }
}

#[test]
fn schedules() {
    let mut s = ptr::null_mut();
    let mut lr = 0.0;
    unsafe {
        ok(lamb_schedule_polynomial(0.1, 100, 10, 1.0, &mut s));
        ok(lamb_schedule_lr_at(s, 0, &mut lr));
        assert_eq!(lr, 0.0);
        ok(lamb_schedule_lr_at(s, 10, &mut lr));
        assert_eq!(lr, 0.1);
        ok(lamb_schedule_lr_at(s, 100, &mut lr));
        assert_eq!(lr, 0.0);
        assert_eq!(lamb_schedule_lr_at(s, 101, &mut lr), LambStatus::StepOutOfRange);
        let mut total = 0;
        ok(lamb_schedule_total_steps(s, &mut total));
        assert_eq!(total, 100);
        lamb_schedule_free(s);

        ok(lamb_schedule_constant(0.5, 10, &mut s));
        ok(lamb_schedule_lr_at(s, 7, &mut lr));
        assert_eq!(lr, 0.5);
        lamb_schedule_free(s);

        assert_eq!(lamb_schedule_polynomial(0.1, 10, 20, 1.0, &mut s), LambStatus::ConfigInvalid);
    }
    assert_eq!(lamb_sqrt_scale_lr(5.0 / 8e3, 512, 2048), 5.0 / 4e3);
    assert_eq!(lamb_scale_warmup(1.0 / 320.0, 512, 1024), 1.0 / 160.0);
    assert!(lamb_sqrt_scale_lr(1.0, 0, 4).is_nan());
}

#[test]
fn status_names() {
    let name = |s: i32| unsafe { CStr::from_ptr(lamb_status_name(s)) }.to_str().unwrap();
    assert_eq!(name(LambStatus::ShapeMismatch as i32), "ShapeMismatch");
    assert_eq!(name(LambStatus::Ok as i32), "Ok");
    assert_eq!(name(-3), "Unknown");
    let v = unsafe { CStr::from_ptr(lamb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
