use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lamb_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[must_use]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument was out of range: bad enum value, index, length or UTF-8.
    InvalidArgument = 2,
    ConfigInvalid = 3,
    ShapeMismatch = 4,
    NonFinite = 5,
    StepOutOfRange = 6,
    /// Checkpoint could not be read or written.
    Io = 7,
    Panic = 99,
}

fn status_name(code: i32) -> &'static CStr {
    match code {
        0 => c"Ok",
        1 => c"NullPointer",
        2 => c"InvalidArgument",
        3 => c"ConfigInvalid",
        4 => c"ShapeMismatch",
        5 => c"NonFinite",
        6 => c"StepOutOfRange",
        7 => c"Io",
        99 => c"Panic",
        _ => c"Unknown",
    }
}

pub(crate) struct Fail {
    status: LambStatus,
    message: String,
}

impl Fail {
    pub(crate) fn new(status: LambStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Self::new(LambStatus::InvalidArgument, message)
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::ShapeMismatch(_) => LambStatus::ShapeMismatch,
            Error::NonFinite { .. } => LambStatus::NonFinite,
            Error::StepOutOfRange { .. } => LambStatus::StepOutOfRange,
            Error::Io(_) | Error::Checkpoint(_) | Error::BadMagic { .. } | Error::TruncatedFile { .. } => {
                LambStatus::Io
            }
            _ => LambStatus::ConfigInvalid,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    // Interior NULs would truncate the C string; replace them.
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
}

/// Runs `f`, recording any failure or panic as this thread's last error.
pub(crate) fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LambStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LambStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            LambStatus::Panic
        }
    }
}

pub(crate) fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: the caller of the C function promises `p` is NULL or valid.
    unsafe { p.as_ref() }.ok_or_else(|| Fail::new(LambStatus::NullPointer, format!("`{what}` is NULL")))
}

pub(crate) fn non_null_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: as above, plus no other live reference to `*p`.
    unsafe { p.as_mut() }.ok_or_else(|| Fail::new(LambStatus::NullPointer, format!("`{what}` is NULL")))
}

pub(crate) fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    non_null(p, what)?;
    // SAFETY: non-null and NUL-terminated per the API contract.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| Fail::invalid(format!("`{what}` is not valid UTF-8")))
}

/// Borrows `len` values from `p`; `len == 0` accepts NULL.
pub(crate) fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    // SAFETY: the caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

pub(crate) fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, what)?;
    // SAFETY: the caller guarantees `len` writable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

/// Message of the last failed call on this thread, or an empty string.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lamb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Static name of a status code, e.g. `"ShapeMismatch"`; `"Unknown"` for
/// values outside the enum. Takes a plain integer so any value is safe.
#[no_mangle]
pub extern "C" fn lamb_status_name(status: i32) -> *const c_char {
    status_name(status).as_ptr()
}
