//! C ABI for the chanflow solver.
//!
//! Configurations and sweep results are opaque handles created and released
//! by this library. Every fallible function returns a [`ChanflowStatus`];
//! on failure a description is available from [`chanflow_last_error`]
//! (per thread). Strings returned by the library are owned by the caller
//! and must be released with [`chanflow_string_free`].

use chanflow::harness::{self, Config, FieldDump, PointStatus, Summary};
use chanflow::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChanflowStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument is malformed (bad UTF-8, empty list, ...).
    InvalidArgument = 2,
    /// The configuration is invalid.
    Config = 3,
    /// A solve failed.
    Solve = 4,
    /// Reading or writing files failed.
    Io = 5,
    /// An index or name does not exist.
    OutOfRange = 6,
    /// An internal panic was caught at the boundary.
    Panic = 7,
}

/// Outcome class of a sweep point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChanflowPointStatus {
    Ok = 0,
    Failed = 1,
    Skipped = 2,
}

/// Summary of one sweep point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChanflowPoint {
    pub eps: f64,
    pub eta: f64,
    pub length: f64,
    /// Grid nodes per direction.
    pub grid: usize,
    pub status: ChanflowPointStatus,
    pub converged: bool,
    pub iterations: usize,
    /// Largest contraction ratio from the second iteration on.
    pub max_ratio: f64,
    /// Largest remainder norm over its admissible bound.
    pub max_bound_ratio: f64,
}

/// Opaque configuration handle.
pub struct ChanflowConfig {
    inner: Config,
}

/// Opaque handle to the results of a sweep or single solve.
pub struct ChanflowSweep {
    summary: Summary,
    dumps: Vec<FieldDump>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> ChanflowStatus {
    match err {
        Error::Config(_) | Error::Expression(_) | Error::Compatibility(_) | Error::InvalidParameter(_) => {
            ChanflowStatus::Config
        }
        Error::Io { .. } => ChanflowStatus::Io,
        _ => ChanflowStatus::Solve,
    }
}

/// Run `f` behind a panic guard, recording any error message.
fn guard(f: impl FnOnce() -> Result<(), (ChanflowStatus, String)>) -> ChanflowStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ChanflowStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ChanflowStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (ChanflowStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ChanflowStatus, String) {
    (ChanflowStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ChanflowStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (ChanflowStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn to_c_string(s: String) -> Result<*mut c_char, (ChanflowStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (ChanflowStatus::InvalidArgument, "string contains NUL".into()))
}

unsafe fn cfg_ref<'a>(cfg: *const ChanflowConfig) -> Result<&'a ChanflowConfig, (ChanflowStatus, String)> {
    cfg.as_ref().ok_or_else(|| null("config"))
}

unsafe fn cfg_mut<'a>(cfg: *mut ChanflowConfig) -> Result<&'a mut ChanflowConfig, (ChanflowStatus, String)> {
    cfg.as_mut().ok_or_else(|| null("config"))
}

unsafe fn sweep_ref<'a>(s: *const ChanflowSweep) -> Result<&'a ChanflowSweep, (ChanflowStatus, String)> {
    s.as_ref().ok_or_else(|| null("sweep"))
}

/// Library version as a static NUL-terminated string (do not free).
#[no_mangle]
pub extern "C" fn chanflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the last error message of the calling thread, or NULL when the
/// last call succeeded. Release with `chanflow_string_free`.
#[no_mangle]
pub extern "C" fn chanflow_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null_mut(), |s| s.clone().into_raw()))
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn chanflow_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Create a configuration with the built-in defaults.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn chanflow_config_default(out: *mut *mut ChanflowConfig) -> ChanflowStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = Box::into_raw(Box::new(ChanflowConfig {
            inner: Config::default(),
        }));
        Ok(())
    })
}

/// Parse and validate a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chanflow_config_from_json(json: *const c_char, out: *mut *mut ChanflowConfig) -> ChanflowStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let text = str_arg(json, "json")?;
        let inner = Config::from_json(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ChanflowConfig { inner }));
        Ok(())
    })
}

/// Serialize a configuration to JSON. Release the string with
/// `chanflow_string_free`.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chanflow_config_to_json(cfg: *const ChanflowConfig, out: *mut *mut c_char) -> ChanflowStatus {
    guard(|| {
        let cfg = cfg_ref(cfg)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let text = serde_json::to_string_pretty(&cfg.inner).map_err(|e| (ChanflowStatus::Config, e.to_string()))?;
        *out = to_c_string(text)?;
        Ok(())
    })
}

/// Use a single grid with `nodes` nodes per direction.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chanflow_config_set_grid(cfg: *mut ChanflowConfig, nodes: usize) -> ChanflowStatus {
    guard(|| {
        let cfg = cfg_mut(cfg)?;
        let mut next = cfg.inner.clone();
        next.grid.nodes = vec![nodes];
        next.validate().map_err(lib_err)?;
        cfg.inner = next;
        Ok(())
    })
}

/// Replace the viscosity list (strictly decreasing values in (0, 1)).
///
/// # Safety
/// `cfg` must be a live handle and `eps` point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn chanflow_config_set_eps(cfg: *mut ChanflowConfig, eps: *const f64, n: usize) -> ChanflowStatus {
    guard(|| {
        let cfg = cfg_mut(cfg)?;
        if eps.is_null() {
            return Err(null("eps"));
        }
        let list = std::slice::from_raw_parts(eps, n).to_vec();
        let mut next = cfg.inner.clone();
        next.sweep.eps = list;
        next.validate().map_err(lib_err)?;
        cfg.inner = next;
        Ok(())
    })
}

/// Set the worker count (0 = all cores).
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chanflow_config_set_workers(cfg: *mut ChanflowConfig, workers: usize) -> ChanflowStatus {
    guard(|| {
        cfg_mut(cfg)?.inner.sweep.workers = workers;
        Ok(())
    })
}

/// Enable or disable the estimate audits at every point.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chanflow_config_set_audits(cfg: *mut ChanflowConfig, enabled: bool) -> ChanflowStatus {
    guard(|| {
        cfg_mut(cfg)?.inner.sweep.audits = enabled;
        Ok(())
    })
}

/// Release a configuration. NULL is ignored.
///
/// # Safety
/// `cfg` must be NULL or a live handle, which becomes invalid.
#[no_mangle]
pub unsafe extern "C" fn chanflow_config_free(cfg: *mut ChanflowConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn into_handle(cfg: &Config, r: harness::SweepResults, with_fits: bool) -> *mut ChanflowSweep {
    Box::into_raw(Box::new(ChanflowSweep {
        summary: Summary::build(cfg, r.points, with_fits),
        dumps: r.dumps,
    }))
}

/// Run the configured sweep. Individual point failures are recorded in the
/// results; the call fails only for invalid configurations.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chanflow_sweep_run(cfg: *const ChanflowConfig, out: *mut *mut ChanflowSweep) -> ChanflowStatus {
    guard(|| {
        let cfg = cfg_ref(cfg)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = harness::run_sweep(&cfg.inner).map_err(lib_err)?;
        *out = into_handle(&cfg.inner, r, true);
        Ok(())
    })
}

/// Solve a single point at viscosity `eps` on a `nodes`² grid.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chanflow_solve_point(
    cfg: *const ChanflowConfig,
    eps: f64,
    nodes: usize,
    out: *mut *mut ChanflowSweep,
) -> ChanflowStatus {
    guard(|| {
        let cfg = cfg_ref(cfg)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let mut c = cfg.inner.clone();
        c.sweep.eps = vec![eps];
        c.grid.nodes = vec![nodes];
        let r = harness::run_single(&c, eps, nodes).map_err(lib_err)?;
        *out = into_handle(&c, r, false);
        Ok(())
    })
}

/// Number of points in a result set.
///
/// # Safety
/// `s` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chanflow_sweep_len(s: *const ChanflowSweep, out: *mut usize) -> ChanflowStatus {
    guard(|| {
        let s = sweep_ref(s)?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.summary.points.len();
        Ok(())
    })
}

/// Summary of point `index`.
///
/// # Safety
/// `s` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chanflow_sweep_point(s: *const ChanflowSweep, index: usize, out: *mut ChanflowPoint) -> ChanflowStatus {
    guard(|| {
        let s = sweep_ref(s)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = s
            .summary
            .points
            .get(index)
            .ok_or_else(|| (ChanflowStatus::OutOfRange, format!("no point {index}")))?;
        *out = ChanflowPoint {
            eps: p.eps,
            eta: p.eta,
            length: p.length,
            grid: p.grid,
            status: match p.status {
                PointStatus::Ok => ChanflowPointStatus::Ok,
                PointStatus::Failed => ChanflowPointStatus::Failed,
                PointStatus::Skipped => ChanflowPointStatus::Skipped,
            },
            converged: p.converged,
            iterations: p.iteration_count(),
            max_ratio: p.max_ratio(),
            max_bound_ratio: p.max_bound_ratio(),
        };
        Ok(())
    })
}

/// Named quantity of point `index` (for example `gap_rho`).
///
/// # Safety
/// `s` must be a live handle, `name` a NUL-terminated string and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chanflow_sweep_quantity(
    s: *const ChanflowSweep,
    index: usize,
    name: *const c_char,
    out: *mut f64,
) -> ChanflowStatus {
    guard(|| {
        let s = sweep_ref(s)?;
        let name = str_arg(name, "name")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = s
            .summary
            .points
            .get(index)
            .ok_or_else(|| (ChanflowStatus::OutOfRange, format!("no point {index}")))?;
        *out = *p
            .quantities
            .get(name)
            .ok_or_else(|| (ChanflowStatus::OutOfRange, format!("point {index} has no quantity '{name}'")))?;
        Ok(())
    })
}

/// Whether every summary check passed.
///
/// # Safety
/// `s` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chanflow_sweep_passed(s: *const ChanflowSweep, out: *mut bool) -> ChanflowStatus {
    guard(|| {
        let s = sweep_ref(s)?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.summary.pass;
        Ok(())
    })
}

/// The JSON summary. Release the string with `chanflow_string_free`.
///
/// # Safety
/// `s` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chanflow_sweep_summary_json(s: *const ChanflowSweep, out: *mut *mut c_char) -> ChanflowStatus {
    guard(|| {
        let s = sweep_ref(s)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let text = serde_json::to_string_pretty(&s.summary).map_err(|e| (ChanflowStatus::Solve, e.to_string()))?;
        *out = to_c_string(text)?;
        Ok(())
    })
}

/// Write the CSV tables, plot script, JSON summary and field dumps to `dir`.
///
/// # Safety
/// `s` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn chanflow_sweep_write_report(s: *const ChanflowSweep, dir: *const c_char) -> ChanflowStatus {
    guard(|| {
        let s = sweep_ref(s)?;
        let dir = str_arg(dir, "dir")?;
        harness::emit_report(&s.summary, &s.dumps, Path::new(dir)).map_err(lib_err)?;
        Ok(())
    })
}

/// Release a result set. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a live handle, which becomes invalid.
#[no_mangle]
pub unsafe extern "C" fn chanflow_sweep_free(s: *mut ChanflowSweep) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Log–log least-squares slope of `values` against `eps` (n ≥ 4 positive
/// values) with its 95 % confidence half-width.
///
/// # Safety
/// `eps` and `values` must point to `n` readable doubles; `slope` and `ci`
/// must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn chanflow_fit_rate(
    eps: *const f64,
    values: *const f64,
    n: usize,
    slope: *mut f64,
    ci: *mut f64,
) -> ChanflowStatus {
    guard(|| {
        if eps.is_null() || values.is_null() {
            return Err(null("eps/values"));
        }
        let slope = slope.as_mut().ok_or_else(|| null("slope"))?;
        let ci = ci.as_mut().ok_or_else(|| null("ci"))?;
        let e = std::slice::from_raw_parts(eps, n);
        let v = std::slice::from_raw_parts(values, n);
        let f = harness::fit_rate("ffi", e, v).map_err(|e| (ChanflowStatus::InvalidArgument, e.to_string()))?;
        *slope = f.slope.unwrap_or(f64::NAN);
        *ci = f.ci.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Background shear profile u_s(y) = α₀ + α₁y + α₂y(2 − y).
#[no_mangle]
pub extern "C" fn chanflow_shear_profile(alpha0: f64, alpha1: f64, alpha2: f64, y: f64) -> f64 {
    let mut p = chanflow::background::FlowParams::with_eps(0.5);
    p.alpha0 = alpha0;
    p.alpha1 = alpha1;
    p.alpha2 = alpha2;
    chanflow::background::eval_us(&p, y)
}
