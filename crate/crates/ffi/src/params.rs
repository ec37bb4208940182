use std::ffi::c_char;

use lamb_core::{LayeredParams, NormKind, ParamBlock};

use crate::error::{c_str, guard, non_null, non_null_mut, slice, slice_mut, Fail, LambStatus};
use crate::optim::LambNormKind;

/// Ordered set of named parameter blocks. Also used for gradients.
pub struct LambParams {
    // `None` until the first block is pushed; the core type needs one block.
    pub(crate) inner: Option<LayeredParams>,
}

impl LambParams {
    pub(crate) fn layered(&self) -> Result<&LayeredParams, Fail> {
        self.inner.as_ref().ok_or_else(|| Fail::new(LambStatus::ShapeMismatch, "params have no blocks"))
    }

    pub(crate) fn layered_mut(&mut self) -> Result<&mut LayeredParams, Fail> {
        self.inner.as_mut().ok_or_else(|| Fail::new(LambStatus::ShapeMismatch, "params have no blocks"))
    }

    fn block(&self, index: usize) -> Result<&ParamBlock, Fail> {
        let blocks = self.layered()?.blocks();
        blocks.get(index).ok_or_else(|| Fail::invalid(format!("block index {index} out of range ({})", blocks.len())))
    }
}

fn boxed(out: *mut *mut LambParams, inner: Option<LayeredParams>) -> Result<(), Fail> {
    let out = non_null_mut(out, "out")?;
    *out = Box::into_raw(Box::new(LambParams { inner }));
    Ok(())
}

/// Creates an empty parameter set in `*out`.
///
/// # Safety
/// `out` must be NULL or point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn lamb_params_new(out: *mut *mut LambParams) -> LambStatus {
    guard(|| boxed(out, None))
}

/// Deep copy of `params` in `*out`.
///
/// # Safety
/// `params` must be NULL or a live handle; `out` as in [`lamb_params_new`].
#[no_mangle]
pub unsafe extern "C" fn lamb_params_clone(params: *const LambParams, out: *mut *mut LambParams) -> LambStatus {
    guard(|| {
        let p = non_null(params, "params")?;
        boxed(out, p.inner.clone())
    })
}

/// # Safety
/// `params` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lamb_params_free(params: *mut LambParams) {
    if !params.is_null() {
        // SAFETY: allocated by `Box::into_raw` in this module.
        drop(unsafe { Box::from_raw(params) });
    }
}

/// Appends a block named `name` with the given row-major `shape` and
/// `len` values. `len` must equal the product of `shape`.
///
/// # Safety
/// `name` must be NUL-terminated; `shape` and `values` must point to `ndim`
/// and `len` elements.
#[no_mangle]
pub unsafe extern "C" fn lamb_params_push_block(
    params: *mut LambParams,
    name: *const c_char,
    shape: *const usize,
    ndim: usize,
    values: *const f64,
    len: usize,
) -> LambStatus {
    guard(|| {
        let p = non_null_mut(params, "params")?;
        let name = c_str(name, "name")?;
        let shape = slice(shape, ndim, "shape")?.to_vec();
        let values = slice(values, len, "values")?.to_vec();
        let block = ParamBlock::new(name, shape, values)?;
        let mut blocks = p.inner.as_ref().map(|l| l.blocks().to_vec()).unwrap_or_default();
        blocks.push(block);
        p.inner = Some(LayeredParams::new(blocks)?);
        Ok(())
    })
}

/// # Safety
/// `params` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lamb_params_num_blocks(params: *const LambParams, out: *mut usize) -> LambStatus {
    guard(|| {
        let p = non_null(params, "params")?;
        *non_null_mut(out, "out")? = p.inner.as_ref().map_or(0, LayeredParams::num_blocks);
        Ok(())
    })
}

/// Number of values in block `index`.
///
/// # Safety
/// `params` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lamb_params_block_len(params: *const LambParams, index: usize, out: *mut usize) -> LambStatus {
    guard(|| {
        let len = non_null(params, "params")?.block(index)?.len();
        *non_null_mut(out, "out")? = len;
        Ok(())
    })
}

/// Copies block `index` into `out`, which holds exactly `len` values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lamb_params_read(
    params: *const LambParams,
    index: usize,
    out: *mut f64,
    len: usize,
) -> LambStatus {
    guard(|| {
        let block = non_null(params, "params")?.block(index)?;
        if len != block.len() {
            return Err(Fail::new(
                LambStatus::ShapeMismatch,
                format!("block `{}` has {} values, buffer holds {len}", block.name(), block.len()),
            ));
        }
        slice_mut(out, len, "out")?.copy_from_slice(block.values());
        Ok(())
    })
}

/// Overwrites block `index` with `len` finite values.
///
/// # Safety
/// `values` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn lamb_params_write(
    params: *mut LambParams,
    index: usize,
    values: *const f64,
    len: usize,
) -> LambStatus {
    guard(|| {
        let p = non_null_mut(params, "params")?;
        p.block(index)?;
        let src = slice(values, len, "values")?;
        let block = &mut p.layered_mut()?.blocks_mut()[index];
        if len != block.len() {
            return Err(Fail::new(
                LambStatus::ShapeMismatch,
                format!("block `{}` has {} values, got {len}", block.name(), block.len()),
            ));
        }
        if src.iter().any(|v| !v.is_finite()) {
            return Err(Fail::new(LambStatus::NonFinite, format!("non-finite value for block `{}`", block.name())));
        }
        block.values_mut().copy_from_slice(src);
        Ok(())
    })
}

/// Norm of block `index`.
///
/// # Safety
/// `params` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lamb_params_block_norm(
    params: *const LambParams,
    index: usize,
    norm: i32,
    out: *mut f64,
) -> LambStatus {
    guard(|| {
        let kind: NormKind = LambNormKind::from_raw(norm)?.into();
        let value = non_null(params, "params")?.block(index)?.norm(kind);
        *non_null_mut(out, "out")? = value;
        Ok(())
    })
}

/// Writes a checkpoint file readable by [`lamb_params_load`] and the CLI.
///
/// # Safety
/// `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lamb_params_save(params: *const LambParams, path: *const c_char) -> LambStatus {
    guard(|| {
        let layered = non_null(params, "params")?.layered()?;
        layered.save(c_str(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` as in [`lamb_params_new`].
#[no_mangle]
pub unsafe extern "C" fn lamb_params_load(path: *const c_char, out: *mut *mut LambParams) -> LambStatus {
    guard(|| {
        let loaded = LayeredParams::load(c_str(path, "path")?)?;
        boxed(out, Some(loaded))
    })
}
