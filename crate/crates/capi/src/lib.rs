//! C ABI over the core library: opaque model handles, status codes, and
//! JSON strings for structured results. Every entry point catches panics
//! (unwinding across the FFI boundary is undefined behaviour) and parks
//! the failure message in thread-local storage.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use combwalk::classifier::{classify_full, Budget};
use combwalk::simulator::{simulate, SimOptions};
use combwalk::transitions::{Direction, ModelSpec, TransitionModel};
use combwalk::Error;

/// Opaque model handle. Create with cw_model_from_json, release with
/// cw_model_free. Handles are immutable and cheap to share.
pub struct CwModel {
    inner: TransitionModel,
}

/// Status code returned by every fallible function. Anything other than Ok
/// leaves a description in cw_last_error_message.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Json = 3,
    InvalidModel = 4,
    SampleCapExceeded = 5,
    HorizonTooLarge = 6,
    BudgetExceeded = 7,
    RangeViolation = 8,
    ContextUnresolvable = 9,
    Config = 10,
    Io = 11,
    Panic = 12,
}

/// Run direction, matching the JSON encoding ("up" / "down").
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CwDirection {
    Up = 0,
    Down = 1,
}

impl From<CwDirection> for Direction {
    fn from(d: CwDirection) -> Self {
        match d {
            CwDirection::Up => Direction::Up,
            CwDirection::Down => Direction::Down,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> CwStatus {
    match err {
        Error::InvalidModel(_) => CwStatus::InvalidModel,
        Error::SampleCapExceeded { .. } => CwStatus::SampleCapExceeded,
        Error::HorizonTooLarge { .. } => CwStatus::HorizonTooLarge,
        Error::BudgetExceeded(_) => CwStatus::BudgetExceeded,
        Error::RangeViolation { .. } => CwStatus::RangeViolation,
        Error::ContextUnresolvable(_) => CwStatus::ContextUnresolvable,
        Error::Config(_) => CwStatus::Config,
        Error::Json(_) => CwStatus::Json,
        Error::Csv(_) | Error::Io(_) => CwStatus::Io,
    }
}

fn fail(err: Error) -> CwStatus {
    let status = status_of(&err);
    set_last_error(err.to_string());
    status
}

/// Catch panics and translate them into a status instead of unwinding.
fn guarded(f: impl FnOnce() -> CwStatus) -> CwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".into());
            set_last_error(format!("internal panic: {msg}"));
            CwStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string valid for reads.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, CwStatus> {
    if ptr.is_null() {
        set_last_error("null string pointer".into());
        return Err(CwStatus::NullPointer);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|e| {
        set_last_error(format!("invalid UTF-8: {e}"));
        CwStatus::InvalidUtf8
    })
}

fn write_out<T>(out: *mut T, value: T) -> CwStatus {
    if out.is_null() {
        set_last_error("null output pointer".into());
        return CwStatus::NullPointer;
    }
    unsafe { out.write(value) };
    CwStatus::Ok
}

fn model_ref<'a>(model: *const CwModel) -> Result<&'a CwModel, CwStatus> {
    if model.is_null() {
        set_last_error("null model handle".into());
        return Err(CwStatus::NullPointer);
    }
    Ok(unsafe { &*model })
}

fn json_out(out: *mut *mut c_char, value: &impl serde::Serialize) -> CwStatus {
    let text = match serde_json::to_string(value) {
        Ok(t) => t,
        Err(e) => return fail(Error::Json(e)),
    };
    let c = match CString::new(text) {
        Ok(c) => c,
        Err(_) => {
            set_last_error("serialized JSON contained NUL".into());
            return CwStatus::Json;
        }
    };
    write_out(out, c.into_raw())
}

/// Parse a JSON model descriptor and return a new handle through `out`.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be valid for a
/// single pointer write.
#[no_mangle]
pub unsafe extern "C" fn cw_model_from_json(
    json: *const c_char,
    out: *mut *mut CwModel,
) -> CwStatus {
    guarded(|| {
        let text = match unsafe { read_str(json) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        let spec: ModelSpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(Error::Json(e)),
        };
        match TransitionModel::from_spec(spec) {
            Ok(inner) => write_out(out, Box::into_raw(Box::new(CwModel { inner }))),
            Err(e) => fail(e),
        }
    })
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be null or a pointer obtained from cw_model_from_json that
/// has not been freed already.
#[no_mangle]
pub unsafe extern "C" fn cw_model_free(model: *mut CwModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Probability of switching direction after `n` steps of a run.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for a double write.
#[no_mangle]
pub unsafe extern "C" fn cw_alpha(
    model: *const CwModel,
    direction: CwDirection,
    n: u64,
    out: *mut f64,
) -> CwStatus {
    guarded(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if n == 0 {
            set_last_error("run length n must be at least 1".into());
            return CwStatus::Config;
        }
        write_out(out, m.inner.alpha(direction.into(), n))
    })
}

/// Survival probability that a run lasts at least `n` steps.
///
/// # Safety
/// Same contract as cw_alpha.
#[no_mangle]
pub unsafe extern "C" fn cw_tail(
    model: *const CwModel,
    direction: CwDirection,
    n: u64,
    out: *mut f64,
) -> CwStatus {
    guarded(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if n == 0 {
            set_last_error("run length n must be at least 1".into());
            return CwStatus::Config;
        }
        write_out(out, m.inner.tail(direction.into(), n))
    })
}

/// Expected run length truncated at `horizon`.
///
/// # Safety
/// Same contract as cw_alpha.
#[no_mangle]
pub unsafe extern "C" fn cw_truncated_mean(
    model: *const CwModel,
    direction: CwDirection,
    horizon: u64,
    out: *mut f64,
) -> CwStatus {
    guarded(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if horizon == 0 {
            set_last_error("horizon must be at least 1".into());
            return CwStatus::Config;
        }
        write_out(out, m.inner.truncated_mean(direction.into(), horizon))
    })
}

/// Classify the model; the result is a JSON document written through
/// `out_json`. Pass zero budgets for the defaults.
///
/// # Safety
/// `model` must be a live handle; `out_json` must be valid for a pointer
/// write. Release the string with cw_string_free.
#[no_mangle]
pub unsafe extern "C" fn cw_classify_json(
    model: *const CwModel,
    budget_terms: u64,
    budget_seconds: f64,
    out_json: *mut *mut c_char,
) -> CwStatus {
    guarded(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        let mut budget = Budget::default();
        if budget_terms > 0 {
            budget.max_terms = budget_terms;
        }
        if budget_seconds > 0.0 {
            budget.max_seconds = budget_seconds;
        }
        match classify_full(&m.inner, &budget) {
            Ok(c) => json_out(out_json, &c),
            Err(e) => fail(e),
        }
    })
}

/// Simulate `steps` steps and return the trajectory summary as JSON.
///
/// # Safety
/// Same contract as cw_classify_json.
#[no_mangle]
pub unsafe extern "C" fn cw_simulate_json(
    model: *const CwModel,
    steps: u64,
    seed: u64,
    replica: u64,
    out_json: *mut *mut c_char,
) -> CwStatus {
    guarded(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        match simulate(&m.inner, steps, seed, replica, &SimOptions::default()) {
            Ok(summary) => json_out(out_json, &summary),
            Err(e) => fail(e),
        }
    })
}

/// Release a string returned through a char** output. Null is a no-op.
///
/// # Safety
/// `s` must be null or a string handed out by this library that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn cw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Message for the most recent failure on this thread. Never null; empty
/// before the first failure. Valid until the next failing call here.
#[no_mangle]
pub extern "C" fn cw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
