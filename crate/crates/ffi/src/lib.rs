//! C ABI over plunnecke-core.
//!
//! Point sets are opaque `PlkPointSet` handles owned by the caller and
//! released with `plk_pointset_free`. Every fallible call returns a
//! `PlkStatus`; on failure `plk_last_error` gives a message for the calling
//! thread. Strings handed out (JSON reports, ratios) must be released with
//! `plk_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use plunnecke_core::density::{schnirelmann_2d, tab_lower_estimate};
use plunnecke_core::experiments::{pipeline_replay, search_schnirelmann, PipelineConfig, SchnirelmannSearch};
use plunnecke_core::fractal::{rect_density_formula, tab_density_formula, FractalSpec, PatternJson};
use plunnecke_core::lattice::{sumset, PointSet2, PointSetJson, Window};
use plunnecke_core::rational::format_ratio;
use plunnecke_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfWindow = 3,
    Parse = 4,
    GuardExceeded = 5,
    Hypothesis = 6,
    /// A checked inequality failed; the report is still written.
    Violation = 7,
    Internal = 8,
    Panic = 9,
}

/// Opaque point set on a finite window `[0,w) x [0,h)`.
pub struct PlkPointSet(PointSet2);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(PlkStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(PlkStatus::Parse, e.to_string())
    }
}

fn status_of(e: &Error) -> PlkStatus {
    match e {
        Error::OutOfWindow { .. } => PlkStatus::OutOfWindow,
        Error::Parse(_) => PlkStatus::Parse,
        Error::GuardExceeded { .. } => PlkStatus::GuardExceeded,
        Error::Hypothesis(_) => PlkStatus::Hypothesis,
        Error::Contract(_) | Error::Io(_) => PlkStatus::Internal,
        _ => PlkStatus::InvalidArgument,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<PlkStatus, Fail>) -> PlkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside plunnecke");
            PlkStatus::Panic
        }
    }
}

fn null_error(what: &str) -> Fail {
    Fail(PlkStatus::NullPointer, format!("{what} is null"))
}

unsafe fn set_ref<'a>(p: *const PlkPointSet, what: &str) -> Result<&'a PointSet2, Fail> {
    p.as_ref().map(|s| &s.0).ok_or_else(|| null_error(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null_error(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(PlkStatus::Parse, format!("{what} is not UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null_error("output pointer"));
    }
    *out = CString::new(s).map_err(|_| Fail(PlkStatus::Internal, "interior NUL".into()))?.into_raw();
    Ok(())
}

unsafe fn put_set(out: *mut *mut PlkPointSet, s: PointSet2) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null_error("output pointer"));
    }
    *out = Box::into_raw(Box::new(PlkPointSet(s)));
    Ok(())
}

/// Message for the last failed call on this thread. Valid until the next
/// failing call; never null.
#[no_mangle]
pub extern "C" fn plk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn plk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Empty set on `[0,w) x [0,h)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn plk_pointset_new(w: usize, h: usize, out: *mut *mut PlkPointSet) -> PlkStatus {
    guard(|| {
        put_set(out, PointSet2::empty(Window::new(w, h)?))?;
        Ok(PlkStatus::Ok)
    })
}

/// Parses `{"w":..,"h":..,"points":[[x,y],..]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plk_pointset_from_json(json: *const c_char, out: *mut *mut PlkPointSet) -> PlkStatus {
    guard(|| {
        let j: PointSetJson = serde_json::from_str(str_arg(json, "json")?)?;
        put_set(out, PointSet2::from_json(&j)?)?;
        Ok(PlkStatus::Ok)
    })
}

/// # Safety
/// `set` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plk_pointset_to_json(set: *const PlkPointSet, out: *mut *mut c_char) -> PlkStatus {
    guard(|| {
        let s = set_ref(set, "set")?;
        put_string(out, serde_json::to_string(&s.to_json())?)?;
        Ok(PlkStatus::Ok)
    })
}

/// # Safety
/// `set` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn plk_pointset_free(set: *mut PlkPointSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// # Safety
/// `set` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn plk_pointset_insert(set: *mut PlkPointSet, x: usize, y: usize) -> PlkStatus {
    guard(|| {
        let s = set.as_mut().ok_or_else(|| null_error("set"))?;
        s.0.insert(x, y)?;
        Ok(PlkStatus::Ok)
    })
}

/// Writes 1 to `out` if `(x,y)` is in the set, else 0.
///
/// # Safety
/// `set` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plk_pointset_contains(set: *const PlkPointSet, x: usize, y: usize, out: *mut i32) -> PlkStatus {
    guard(|| {
        let s = set_ref(set, "set")?;
        let hit = s.contains(x, y)?;
        *out.as_mut().ok_or_else(|| null_error("out"))? = hit as i32;
        Ok(PlkStatus::Ok)
    })
}

/// Number of points; 0 for a null handle.
///
/// # Safety
/// `set` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn plk_pointset_len(set: *const PlkPointSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.len())
}

/// `A + B` clipped to the window of `a`. Both sets must share a window.
///
/// # Safety
/// `a`, `b` must be live handles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plk_sumset(a: *const PlkPointSet, b: *const PlkPointSet, out: *mut *mut PlkPointSet) -> PlkStatus {
    guard(|| {
        let (a, b) = (set_ref(a, "a")?, set_ref(b, "b")?);
        if a.window() != b.window() {
            return Err(Error::WindowMismatch(format!("{:?} vs {:?}", a.window(), b.window())).into());
        }
        put_set(out, sumset(a, b, a.window()))?;
        Ok(PlkStatus::Ok)
    })
}

/// Exact `σ_{N,M}(A)` as a decimal ratio string such as `"3/4"`.
///
/// # Safety
/// `set` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plk_schnirelmann(set: *const PlkPointSet, n: usize, m: usize, out: *mut *mut c_char) -> PlkStatus {
    guard(|| {
        let s = set_ref(set, "set")?;
        put_string(out, format_ratio(&schnirelmann_2d(s, n, m)?))?;
        Ok(PlkStatus::Ok)
    })
}

/// Least density over tableau regions with at most `l` boxes, corners above
/// `r` on the `stride` lattice inside `extent_w x extent_h` (0 for the set's
/// extent). Writes the estimate as JSON.
///
/// # Safety
/// `set` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plk_tab_lower_estimate(
    set: *const PlkPointSet,
    r: u64,
    l: usize,
    stride: u64,
    extent_w: u64,
    extent_h: u64,
    out: *mut *mut c_char,
) -> PlkStatus {
    guard(|| {
        let s = set_ref(set, "set")?;
        let extent = (extent_w > 0 && extent_h > 0).then_some((extent_w, extent_h));
        let est = tab_lower_estimate(s, r, l, stride, extent)?;
        put_string(out, serde_json::to_string(&est)?)?;
        Ok(PlkStatus::Ok)
    })
}

/// Closed-form rectangle and tableau densities of a fractal pattern given as
/// `{"n":..,"points":[[x,y],..]}`. Writes `{"rect_density","tab_density"}`.
///
/// # Safety
/// `pattern_json` must be NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plk_fractal_densities(pattern_json: *const c_char, out: *mut *mut c_char) -> PlkStatus {
    guard(|| {
        let pat: PatternJson = serde_json::from_str(str_arg(pattern_json, "pattern_json")?)?;
        let spec = FractalSpec::from_json(&pat, 1)?;
        let (rect, _) = rect_density_formula(&spec.pattern, spec.n);
        let (tab, _) = tab_density_formula(&spec.pattern, spec.n, spec.n)?;
        let v = serde_json::json!({ "rect_density": format_ratio(&rect), "tab_density": format_ratio(&tab) });
        put_string(out, v.to_string())?;
        Ok(PlkStatus::Ok)
    })
}

/// Replays the density argument for a pipeline config. Writes the trace as
/// JSON and returns `Violation` if any checked step fails.
///
/// # Safety
/// `config_json` must be NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plk_pipeline_replay(config_json: *const c_char, out: *mut *mut c_char) -> PlkStatus {
    guard(|| {
        let cfg: PipelineConfig = serde_json::from_str(str_arg(config_json, "config_json")?)?;
        let trace = pipeline_replay(&cfg.input()?)?;
        put_string(out, serde_json::to_string(&trace)?)?;
        Ok(if trace.ok() { PlkStatus::Ok } else { PlkStatus::Violation })
    })
}

/// Runs `budget` instances (0 for all remaining) of a σ-inequality search
/// from `cursor`. Writes the report as JSON; `Violation` if any was found.
///
/// # Safety
/// `config_json` must be NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plk_search_schnirelmann(
    config_json: *const c_char,
    cursor: u64,
    budget: u64,
    out: *mut *mut c_char,
) -> PlkStatus {
    guard(|| {
        let s: SchnirelmannSearch = serde_json::from_str(str_arg(config_json, "config_json")?)?;
        let rep = search_schnirelmann(&s, cursor, (budget > 0).then_some(budget), false)?;
        put_string(out, serde_json::to_string(&rep)?)?;
        Ok(if rep.violation_count > 0 { PlkStatus::Violation } else { PlkStatus::Ok })
    })
}
