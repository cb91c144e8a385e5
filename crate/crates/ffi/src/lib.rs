//! C ABI over `wearpath`.
//!
//! Every fallible call returns a [`WpStatus`]; on failure the message is available from
//! [`wp_last_error`] on the same thread. Handles are opaque and must be released with
//! their matching `*_free` function. Strings returned through out-pointers are owned by
//! the caller and released with [`wp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use wearpath::canvas::Canvas;
use wearpath::experiment::{run_comparison, ArmRun, ExperimentConfig};
use wearpath::force::{fit_force, CalibrationRow, CalibrationSet};
use wearpath::tip::{deposition_width_with, EllipseAxes, ToolTipState, WidthConvention};
use wearpath::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WpStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad argument, malformed config or unreadable input.
    InvalidInput = 2,
    /// The computation itself failed (no contact, rank deficiency, canvas overflow, ...).
    Numerical = 3,
    Io = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WpWidthConvention {
    MajorAlongNormal = 0,
    Swapped = 1,
    Extent = 2,
}

impl From<WpWidthConvention> for WidthConvention {
    fn from(c: WpWidthConvention) -> Self {
        match c {
            WpWidthConvention::MajorAlongNormal => WidthConvention::MajorAlongNormal,
            WpWidthConvention::Swapped => WidthConvention::Swapped,
            WpWidthConvention::Extent => WidthConvention::Extent,
        }
    }
}

/// Opaque experiment configuration.
pub struct WpExperiment {
    config: ExperimentConfig,
}

/// Opaque raster canvas.
pub struct WpCanvas {
    canvas: Canvas,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> WpStatus {
    match err {
        Error::Io(_) => WpStatus::Io,
        e if e.exit_code() == 2 => WpStatus::InvalidInput,
        _ => WpStatus::Numerical,
    }
}

/// Runs `f`, translating errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (WpStatus, String)>) -> WpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside wearpath");
            WpStatus::Internal
        }
    }
}

fn lift(err: Error) -> (WpStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (WpStatus, String) {
    (WpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (WpStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (WpStatus::InvalidInput, format!("{what} is not valid UTF-8")))
}

fn into_c_string(s: String) -> Result<*mut c_char, (WpStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (WpStatus::Internal, "string contains NUL".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn wp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Footprint axes (meters) of a cone with slope `m` tilted by `gamma_deg` at plane offset `d`.
///
/// # Safety
/// `major` and `minor` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_tip_axes(m: f64, gamma_deg: f64, d: f64, major: *mut f64, minor: *mut f64) -> WpStatus {
    guard(|| {
        if major.is_null() || minor.is_null() {
            return Err(null("output pointer"));
        }
        let tip = ToolTipState::from_tilt_degrees(m, gamma_deg, d, 0.0, d.max(f64::MIN_POSITIVE)).map_err(lift)?;
        let axes = tip.axes().map_err(lift)?;
        *major = axes.major;
        *minor = axes.minor;
        Ok(())
    })
}

/// Deposited width (meters) of a footprint with the given axes at heading `psi` (radians).
///
/// # Safety
/// `width` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wp_deposition_width(
    major: f64,
    minor: f64,
    psi: f64,
    convention: WpWidthConvention,
    width: *mut f64,
) -> WpStatus {
    guard(|| {
        if width.is_null() {
            return Err(null("output pointer"));
        }
        if !(major >= 0.0 && minor >= 0.0 && psi.is_finite()) {
            return Err((
                WpStatus::InvalidInput,
                "axes must be non-negative and psi finite".into(),
            ));
        }
        *width = deposition_width_with(EllipseAxes { major, minor }, psi, convention.into());
        Ok(())
    })
}

/// Least-squares fit of `force = theta·penetration + theta0` over `n` samples.
///
/// # Safety
/// `penetration` and `force` must point to `n` readable doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_fit_force(
    penetration: *const f64,
    force: *const f64,
    n: usize,
    theta: *mut f64,
    theta0: *mut f64,
) -> WpStatus {
    guard(|| {
        if penetration.is_null() || force.is_null() || theta.is_null() || theta0.is_null() {
            return Err(null("argument"));
        }
        let pen = std::slice::from_raw_parts(penetration, n);
        let f = std::slice::from_raw_parts(force, n);
        let data = CalibrationSet {
            rows: pen
                .iter()
                .zip(f)
                .map(|(&penetration, &force)| CalibrationRow { penetration, force })
                .collect(),
        };
        let p = fit_force(&data).map_err(lift)?;
        *theta = p.theta;
        *theta0 = p.theta0;
        Ok(())
    })
}

/// Builds an experiment from a JSON config document. Missing fields take their defaults;
/// pass `"{}"` for the built-in configuration. Relative paths resolve against the working
/// directory.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_experiment_from_json(json: *const c_char, out: *mut *mut WpExperiment) -> WpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| (WpStatus::InvalidInput, format!("config error: {e}")))?;
        config.validate().map_err(lift)?;
        *out = Box::into_raw(Box::new(WpExperiment { config }));
        Ok(())
    })
}

/// Loads an experiment config file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_experiment_load(path: *const c_char, out: *mut *mut WpExperiment) -> WpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = read_str(path, "path")?;
        let config = ExperimentConfig::load(Path::new(path)).map_err(lift)?;
        *out = Box::into_raw(Box::new(WpExperiment { config }));
        Ok(())
    })
}

/// Overrides the number of iterations.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wp_experiment_set_iterations(exp: *mut WpExperiment, iterations: u32) -> WpStatus {
    guard(|| {
        let exp = exp.as_mut().ok_or_else(|| null("experiment"))?;
        if iterations == 0 {
            return Err((WpStatus::InvalidInput, "iterations must be at least 1".into()));
        }
        exp.config.iterations = iterations as usize;
        Ok(())
    })
}

/// Runs both arms and returns the comparison summary as a JSON string. Artifacts are
/// written under `out_dir` unless it is null.
///
/// # Safety
/// `exp` must be a live handle, `out_dir` null or NUL-terminated, `summary_json` writable.
#[no_mangle]
pub unsafe extern "C" fn wp_experiment_compare(
    exp: *const WpExperiment,
    out_dir: *const c_char,
    summary_json: *mut *mut c_char,
) -> WpStatus {
    guard(|| {
        let exp = exp.as_ref().ok_or_else(|| null("experiment"))?;
        if summary_json.is_null() {
            return Err(null("summary_json"));
        }
        *summary_json = ptr::null_mut();
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(read_str(out_dir, "out_dir")?))
        };
        let (summary, _, _) = run_comparison(&exp.config, dir).map_err(lift)?;
        let text = serde_json::to_string(&summary).map_err(|e| (WpStatus::Internal, e.to_string()))?;
        *summary_json = into_c_string(text)?;
        Ok(())
    })
}

/// # Safety
/// `exp` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn wp_experiment_free(exp: *mut WpExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Reads a plain (P2) PGM canvas.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_canvas_read_pgm(path: *const c_char, out: *mut *mut WpCanvas) -> WpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = read_str(path, "path")?;
        let canvas = Canvas::read_pgm(Path::new(path)).map_err(lift)?;
        *out = Box::into_raw(Box::new(WpCanvas { canvas }));
        Ok(())
    })
}

/// Canvas size in pixels.
///
/// # Safety
/// `canvas` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn wp_canvas_size(canvas: *const WpCanvas, width: *mut usize, height: *mut usize) -> WpStatus {
    guard(|| {
        let c = canvas.as_ref().ok_or_else(|| null("canvas"))?;
        if width.is_null() || height.is_null() {
            return Err(null("output pointer"));
        }
        *width = c.canvas.geometry().width;
        *height = c.canvas.geometry().height;
        Ok(())
    })
}

/// Measures the canvas against the experiment's reference stroke and threshold. Writes the
/// error metric (meters) to `v` and the number of samples without a detected stroke to
/// `invalid`.
///
/// # Safety
/// Handles must be live; outputs must be writable (`invalid` may be null).
#[no_mangle]
pub unsafe extern "C" fn wp_canvas_measure(
    canvas: *const WpCanvas,
    exp: *const WpExperiment,
    v: *mut f64,
    invalid: *mut usize,
) -> WpStatus {
    guard(|| {
        let c = canvas.as_ref().ok_or_else(|| null("canvas"))?;
        let exp = exp.as_ref().ok_or_else(|| null("experiment"))?;
        if v.is_null() {
            return Err(null("v"));
        }
        let run = ArmRun::new(&exp.config, &exp.config.tilted).map_err(lift)?;
        let (profile, metric) = run.measure(&c.canvas).map_err(lift)?;
        *v = metric;
        if !invalid.is_null() {
            *invalid = profile.invalid_count();
        }
        Ok(())
    })
}

/// # Safety
/// `canvas` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn wp_canvas_free(canvas: *mut WpCanvas) {
    if !canvas.is_null() {
        drop(Box::from_raw(canvas));
    }
}
