//! C ABI for the delay-compensation toolkit: opaque handles over scenarios,
//! solved feedback laws and trained operator models, with status codes and a
//! thread-local last-error message.
//!
//! Every constructor hands ownership to the caller; the matching `_free`
//! function must be called exactly once. All functions are re-entrant as
//! long as each handle is used from one thread at a time.

use delaybs::coefficients::{CoefficientSet, DelayFunction};
use delaybs::controller::ControlLaw;
use delaybs::grid::Field2;
use delaybs::kernel::{solve_kernel, KernelConfig};
use delaybs::operator::{load_model, DeepONetModel};
use libc::{c_char, size_t};
use std::cell::RefCell;
use std::ffi::{CStr, CString};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DelaybsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NoConvergence = 3,
    GeometryError = 4,
    IoError = 5,
    FormatError = 6,
    InternalError = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let safe = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = safe);
}

/// Message of the most recent error on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn delaybs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Package version as a static string.
#[no_mangle]
pub extern "C" fn delaybs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Plant coefficients plus an admissible delay function.
pub struct DelaybsScenario {
    coeffs: CoefficientSet,
    delay: DelayFunction,
}

/// A solved feedback law (kernel plus control geometry).
pub struct DelaybsLaw {
    law: ControlLaw,
}

/// A trained operator model.
pub struct DelaybsModel {
    model: DeepONetModel,
}

/// Build a scenario from the JSON document also accepted by the command-line
/// tool: `{"c": {"family": ..., "params": [...]}, "f": {...}, "delay": {...},
/// "grid": 41}`.
///
/// # Safety
/// `json` must be a valid NUL-terminated UTF-8 string; `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn delaybs_scenario_from_json(
    json: *const c_char,
    out: *mut *mut DelaybsScenario,
) -> DelaybsStatus {
    if json.is_null() || out.is_null() {
        set_error("null pointer");
        return DelaybsStatus::NullPointer;
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("scenario JSON is not valid UTF-8");
            return DelaybsStatus::InvalidArgument;
        }
    };
    match delaybs::cli::scenario_from_json(text) {
        Ok((coeffs, delay)) => {
            *out = Box::into_raw(Box::new(DelaybsScenario { coeffs, delay }));
            DelaybsStatus::Ok
        }
        Err(e) => {
            set_error(&e);
            DelaybsStatus::InvalidArgument
        }
    }
}

/// # Safety
/// `scenario` must be a pointer returned by [`delaybs_scenario_from_json`],
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn delaybs_scenario_free(scenario: *mut DelaybsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Solve the feedback kernel for a scenario and build the control law.
///
/// # Safety
/// `scenario` must be a live scenario handle; `out` must point to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn delaybs_law_solve(
    scenario: *const DelaybsScenario,
    spacing: f64,
    tolerance: f64,
    out: *mut *mut DelaybsLaw,
) -> DelaybsStatus {
    if scenario.is_null() || out.is_null() {
        set_error("null pointer");
        return DelaybsStatus::NullPointer;
    }
    let scenario = &*scenario;
    let config = KernelConfig {
        spacing,
        tolerance,
        ..KernelConfig::default()
    };
    let kernel = match solve_kernel(&scenario.coeffs, &scenario.delay, config) {
        Ok(k) => k,
        Err(e) => {
            set_error(&e.to_string());
            return match e {
                delaybs::kernel::KernelError::InvalidSpacing(_) => DelaybsStatus::InvalidArgument,
                delaybs::kernel::KernelError::NoConvergence { .. } => DelaybsStatus::NoConvergence,
                _ => DelaybsStatus::GeometryError,
            };
        }
    };
    match ControlLaw::new(kernel, scenario.delay.clone(), scenario.coeffs.clone()) {
        Ok(law) => {
            *out = Box::into_raw(Box::new(DelaybsLaw { law }));
            DelaybsStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            DelaybsStatus::GeometryError
        }
    }
}

/// # Safety
/// `law` must be a pointer returned by [`delaybs_law_solve`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn delaybs_law_free(law: *mut DelaybsLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// Kernel value at `(s, q)` on the triangle (bilinear off nodes).
///
/// # Safety
/// `law` must be a live law handle; `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn delaybs_kernel_value(
    law: *const DelaybsLaw,
    s: f64,
    q: f64,
    out: *mut f64,
) -> DelaybsStatus {
    if law.is_null() || out.is_null() {
        set_error("null pointer");
        return DelaybsStatus::NullPointer;
    }
    *out = (*law).law.kernel().eval(s, q);
    DelaybsStatus::Ok
}

/// Convergence diagnostics of the solved kernel.
///
/// # Safety
/// `law` must be a live law handle; the out pointers may be NULL to skip a
/// field, otherwise they must be writable.
#[no_mangle]
pub unsafe extern "C" fn delaybs_kernel_info(
    law: *const DelaybsLaw,
    residual: *mut f64,
    iterations_branch1: *mut u32,
    iterations_branch2: *mut u32,
    sup_abs: *mut f64,
) -> DelaybsStatus {
    if law.is_null() {
        set_error("null pointer");
        return DelaybsStatus::NullPointer;
    }
    let kernel = (*law).law.kernel();
    if !residual.is_null() {
        *residual = kernel.residual();
    }
    let (i1, i2) = kernel.iterations();
    if !iterations_branch1.is_null() {
        *iterations_branch1 = i1 as u32;
    }
    if !iterations_branch2.is_null() {
        *iterations_branch2 = i2 as u32;
    }
    if !sup_abs.is_null() {
        *sup_abs = kernel.sup_abs();
    }
    DelaybsStatus::Ok
}

unsafe fn field_from_raw(u: *const f64, rows: size_t, cols: size_t) -> Option<Field2> {
    if u.is_null() || rows < 2 || cols < 2 {
        return None;
    }
    let slice = std::slice::from_raw_parts(u, rows * cols);
    let mut field = Field2::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            field.set(i, j, slice[i * cols + j]);
        }
    }
    Some(field)
}

/// Exact boundary feedback on a sampled state. `x` holds `x_len` samples of
/// the transported state on a uniform grid over `[0, 1]`; `u` holds
/// `u_rows * u_cols` row-major samples of the delay line with
/// `u_rows == x_len`.
///
/// # Safety
/// `law` must be a live law handle; `x` and `u` must point to readable
/// arrays of the stated lengths; `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn delaybs_control(
    law: *const DelaybsLaw,
    x: *const f64,
    x_len: size_t,
    u: *const f64,
    u_rows: size_t,
    u_cols: size_t,
    out: *mut f64,
) -> DelaybsStatus {
    if law.is_null() || x.is_null() || out.is_null() {
        set_error("null pointer");
        return DelaybsStatus::NullPointer;
    }
    let x = std::slice::from_raw_parts(x, x_len);
    let Some(field) = field_from_raw(u, u_rows, u_cols) else {
        set_error("delay-line field needs at least a 2x2 grid");
        return DelaybsStatus::InvalidArgument;
    };
    match (*law).law.control(x, &field) {
        Ok(v) => {
            *out = v;
            DelaybsStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            DelaybsStatus::InvalidArgument
        }
    }
}

/// Load a trained operator model from its JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated UTF-8 path; `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn delaybs_model_load(
    path: *const c_char,
    out: *mut *mut DelaybsModel,
) -> DelaybsStatus {
    if path.is_null() || out.is_null() {
        set_error("null pointer");
        return DelaybsStatus::NullPointer;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(p) => p,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return DelaybsStatus::InvalidArgument;
        }
    };
    match load_model(std::path::Path::new(path)) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(DelaybsModel { model }));
            DelaybsStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            match e {
                delaybs::operator::OperatorError::Io(_) => DelaybsStatus::IoError,
                _ => DelaybsStatus::FormatError,
            }
        }
    }
}

/// # Safety
/// `model` must be a pointer returned by [`delaybs_model_load`], not freed.
#[no_mangle]
pub unsafe extern "C" fn delaybs_model_free(model: *mut DelaybsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Learned-operator inference. Channels may be sampled on any uniform grids
/// (at least two nodes per axis); they are resampled internally.
///
/// # Safety
/// `model` must be a live model handle; `tau`, `x`, `u` must point to
/// readable arrays of the stated lengths; `out` must point to one writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn delaybs_model_predict(
    model: *const DelaybsModel,
    tau: *const f64,
    tau_len: size_t,
    x: *const f64,
    x_len: size_t,
    u: *const f64,
    u_rows: size_t,
    u_cols: size_t,
    out: *mut f64,
) -> DelaybsStatus {
    if model.is_null() || tau.is_null() || x.is_null() || out.is_null() {
        set_error("null pointer");
        return DelaybsStatus::NullPointer;
    }
    let tau = std::slice::from_raw_parts(tau, tau_len);
    let x = std::slice::from_raw_parts(x, x_len);
    let Some(field) = field_from_raw(u, u_rows, u_cols) else {
        set_error("delay-line field needs at least a 2x2 grid");
        return DelaybsStatus::InvalidArgument;
    };
    match (*model).model.predict(tau, x, &field) {
        Ok(v) => {
            *out = v;
            DelaybsStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            DelaybsStatus::InvalidArgument
        }
    }
}
