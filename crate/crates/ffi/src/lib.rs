//! C ABI over the `gp-limits` solvers.
//!
//! Every function returns a [`GplStatus`]. On failure the message is kept per
//! thread and can be read back with [`gpl_last_error_message`]. Objects are
//! opaque handles released with their `_free` function; passing NULL to a
//! `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use gp_limits::cli::execute;
use gp_limits::config::parse_config;
use gp_limits::gp_solver::{gp_minimize, GpOptions, GpSolution};
use gp_limits::potentials::{eval_trap, InteractionSpec, TrapSpec};
use gp_limits::scattering::compute_scattering;
use gp_limits::{build_grid, Boundary, Error, Grid};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GplStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    SolverError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GplBoundary {
    Dirichlet = 0,
    Periodic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GplTrap {
    Harmonic = 0,
    Quartic = 1,
    Zero = 2,
}

/// A tensor-product grid.
pub struct GplGrid {
    grid: Arc<Grid>,
}

/// A converged (or best-effort) GP ground state.
pub struct GplGpSolution {
    sol: GpSolution,
}

/// JSON output of a config-driven run.
pub struct GplRunResult {
    json: CString,
    csv: Option<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: GplStatus, msg: impl Into<String>) -> GplStatus {
    set_error(msg.into());
    status
}

fn solver_status(e: &Error) -> GplStatus {
    let status = match e {
        Error::Config(_) => GplStatus::ConfigError,
        Error::InvalidDimension(_) | Error::InvalidGrid(_) | Error::InvalidParameter { .. } => {
            GplStatus::InvalidArgument
        }
        _ => GplStatus::SolverError,
    };
    fail(status, format!("{}: {e}", e.name()))
}

/// Run `f`, turning a panic into [`GplStatus::Panic`].
fn guard(f: impl FnOnce() -> GplStatus) -> GplStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(GplStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn boxed<T>(out: *mut *mut T, value: T) -> GplStatus {
    // SAFETY: callers check `out` for NULL first.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    GplStatus::Ok
}

/// Copy `src` into a caller buffer of `len` doubles; `*written` receives the required length.
fn copy_out(src: &[f64], buf: *mut f64, len: usize, written: *mut usize) -> GplStatus {
    if !written.is_null() {
        // SAFETY: non-null pointer supplied by the caller.
        unsafe { *written = src.len() };
    }
    if buf.is_null() || len < src.len() {
        return fail(GplStatus::BufferTooSmall, format!("need {} values, buffer holds {len}", src.len()));
    }
    // SAFETY: buf holds at least src.len() doubles.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    GplStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gpl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes (without the NUL) of the last error message on this thread, 0 if none.
#[no_mangle]
pub extern "C" fn gpl_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copy the last error message into `buf` (NUL-terminated, truncated to `len`).
///
/// Returns the number of bytes written without the NUL.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gpl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// Build a grid of `points_per_axis`^`dim` nodes on [-half_width, half_width]^dim.
///
/// # Safety
/// `out` must be NULL or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gpl_grid_new(
    dim: usize,
    half_width: f64,
    points_per_axis: usize,
    boundary: GplBoundary,
    out: *mut *mut GplGrid,
) -> GplStatus {
    guard(|| {
        if out.is_null() {
            return fail(GplStatus::NullPointer, "out is NULL");
        }
        let b = match boundary {
            GplBoundary::Dirichlet => Boundary::Dirichlet,
            GplBoundary::Periodic => Boundary::Periodic,
        };
        match build_grid(dim, half_width, points_per_axis, b) {
            Ok(grid) => boxed(out, GplGrid { grid }),
            Err(e) => solver_status(&e),
        }
    })
}

/// # Safety
/// `grid` must be NULL or a handle from [`gpl_grid_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gpl_grid_free(grid: *mut GplGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Total number of nodes, or 0 for NULL.
///
/// # Safety
/// `grid` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gpl_grid_node_count(grid: *const GplGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.grid.node_count())
}

/// Minimize the GP functional with coupling `alpha` in the given trap.
///
/// # Safety
/// `grid` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gpl_gp_minimize(
    grid: *const GplGrid,
    trap: GplTrap,
    alpha: f64,
    out: *mut *mut GplGpSolution,
) -> GplStatus {
    guard(|| {
        let Some(g) = grid.as_ref() else {
            return fail(GplStatus::NullPointer, "grid is NULL");
        };
        if out.is_null() {
            return fail(GplStatus::NullPointer, "out is NULL");
        }
        let spec = match trap {
            GplTrap::Harmonic => TrapSpec::Harmonic,
            GplTrap::Quartic => TrapSpec::Quartic,
            GplTrap::Zero => TrapSpec::Zero,
        };
        let field = eval_trap(&spec, &g.grid);
        match gp_minimize(&field, alpha, &GpOptions::default()) {
            Ok(sol) => boxed(out, GplGpSolution { sol }),
            Err(e) => solver_status(&e),
        }
    })
}

/// # Safety
/// `sol` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gpl_gp_solution_free(sol: *mut GplGpSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// # Safety
/// `sol` must be a live handle; `energy` and `converged` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gpl_gp_solution_energy(
    sol: *const GplGpSolution,
    energy: *mut f64,
    converged: *mut bool,
) -> GplStatus {
    let Some(s) = sol.as_ref() else {
        return fail(GplStatus::NullPointer, "solution is NULL");
    };
    if let Some(e) = energy.as_mut() {
        *e = s.sol.energy;
    }
    if let Some(c) = converged.as_mut() {
        *c = s.sol.converged;
    }
    GplStatus::Ok
}

/// Copy the ground state φ (row-major nodes) into `buf`.
///
/// # Safety
/// `sol` must be a live handle; `buf` must hold `len` doubles; `written` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gpl_gp_solution_phi(
    sol: *const GplGpSolution,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> GplStatus {
    let Some(s) = sol.as_ref() else {
        return fail(GplStatus::NullPointer, "solution is NULL");
    };
    copy_out(&s.sol.phi.values, buf, len, written)
}

/// Scattering length of the Gaussian v(r) = g exp(-r²/(2s²)) in dimension 2 or 3.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gpl_scattering_length_gaussian(
    g: f64,
    s: f64,
    dim: usize,
    r_max: f64,
    mesh: usize,
    out: *mut f64,
) -> GplStatus {
    guard(|| {
        if out.is_null() {
            return fail(GplStatus::NullPointer, "out is NULL");
        }
        match compute_scattering(&InteractionSpec::Gaussian { g, s }, dim, r_max, mesh) {
            Ok(r) => {
                *out = r.alpha_tilde;
                GplStatus::Ok
            }
            Err(e) => solver_status(&e),
        }
    })
}

/// Parse a key = value config and run its subcommand.
///
/// # Safety
/// `config` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gpl_run_config(config: *const c_char, out: *mut *mut GplRunResult) -> GplStatus {
    guard(|| {
        if config.is_null() || out.is_null() {
            return fail(GplStatus::NullPointer, "config or out is NULL");
        }
        let Ok(text) = CStr::from_ptr(config).to_str() else {
            return fail(GplStatus::InvalidArgument, "config is not valid UTF-8");
        };
        let cfg = match parse_config(text) {
            Ok(c) => c,
            Err(e) => return fail(GplStatus::ConfigError, format!("{}: {e}", e.name())),
        };
        match execute(&cfg) {
            Ok(r) => {
                let json = serde_json::to_string(&r.json).unwrap_or_default();
                let result = GplRunResult {
                    json: CString::new(json).unwrap_or_default(),
                    csv: r.csv.and_then(|c| CString::new(c).ok()),
                };
                boxed(out, result)
            }
            Err(e) => solver_status(&e),
        }
    })
}

/// JSON text of a run; valid until the result is freed.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gpl_run_result_json(res: *const GplRunResult) -> *const c_char {
    res.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// CSV table of a run, or NULL when the subcommand has none.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gpl_run_result_csv(res: *const GplRunResult) -> *const c_char {
    res.as_ref().and_then(|r| r.csv.as_ref()).map_or(ptr::null(), |c| c.as_ptr())
}

/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gpl_run_result_free(res: *mut GplRunResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
