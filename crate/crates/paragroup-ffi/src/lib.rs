//! C ABI over the wave solver and the curvature/dispersion helpers.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Every fallible call returns a [`PgStatus`]; the message
//! of the last failure on the calling thread is available through
//! [`pg_last_error`]. Panics are caught at the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use paragroup::waves::{self, WaveConfig, WaveSolver, WaveState};
use paragroup::{Error, SphFn, C64};

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Admissibility = 4,
    Solver = 5,
    StepRejected = 6,
    Cfl = 7,
    Internal = 8,
    Panic = 9,
}

/// Conserved quantities of a state, see `pg_solver_conserved`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PgConserved {
    pub t: f64,
    pub volume: f64,
    pub area: f64,
    pub kinetic: f64,
    pub hamiltonian: f64,
    pub momentum: [f64; 3],
    pub center: [f64; 3],
}

pub struct PgSolver(WaveSolver);

pub struct PgState(WaveState);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PgStatus {
    match e {
        Error::Config(_) | Error::Json(_) => PgStatus::Config,
        Error::Admissibility(_) => PgStatus::Admissibility,
        Error::IllConditioned { .. }
        | Error::Residual { .. }
        | Error::NotPositiveDefinite(_)
        | Error::SylvesterSingular(_) => PgStatus::Solver,
        Error::StepRejected(_) => PgStatus::StepRejected,
        Error::Cfl { .. } => PgStatus::Cfl,
        Error::IndexOutOfRange { .. } | Error::Parity { .. } | Error::Shape(_) | Error::GridTooCoarse { .. } => {
            PgStatus::InvalidArgument
        }
        _ => PgStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PgStatus, String)>) -> PgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PgStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside paragroup".into());
            PgStatus::Panic
        }
    }
}

fn lib<T>(r: paragroup::Result<T>) -> Result<T, (PgStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (PgStatus, String) {
    (PgStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: String) -> (PgStatus, String) {
    (PgStatus::InvalidArgument, msg)
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (PgStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (PgStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

fn check_mode(l_max: usize, n: usize, m: i32) -> Result<(), (PgStatus, String)> {
    if n > l_max || m.unsigned_abs() as usize > n {
        return Err(invalid(format!("mode ({n}, {m}) outside l_max = {l_max}")));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Linear frequency `sqrt(n (n - 1) (n + 2))` of the degree-`n` mode.
#[no_mangle]
pub extern "C" fn pg_dispersion(n: u32) -> f64 {
    waves::dispersion(n as usize)
}

/// Solver with default settings at band `l_max`, stepping with `dt`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn pg_solver_new(l_max: u32, dt: f64, out: *mut *mut PgSolver) -> PgStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("dt = {dt} must be positive")));
        }
        let cfg = WaveConfig {
            l_max: l_max as usize,
            dt,
            ..WaveConfig::default()
        };
        let s = lib(WaveSolver::new(cfg))?;
        *out = Box::into_raw(Box::new(PgSolver(s)));
        Ok(())
    })
}

/// Solver from a JSON `WaveConfig` object (missing keys take defaults).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pg_solver_new_json(json: *const c_char, out: *mut *mut PgSolver) -> PgStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| invalid(e.to_string()))?;
        let cfg: WaveConfig = serde_json::from_str(text).map_err(|e| (PgStatus::Config, e.to_string()))?;
        let s = lib(WaveSolver::new(cfg))?;
        *out = Box::into_raw(Box::new(PgSolver(s)));
        Ok(())
    })
}

/// # Safety
/// `s` must come from `pg_solver_new*` and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pg_solver_free(s: *mut PgSolver) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Largest stable step of the solver.
///
/// # Safety
/// `s` must be a live solver handle.
#[no_mangle]
pub unsafe extern "C" fn pg_solver_cfl_limit(s: *const PgSolver) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.0.cfg.cfl_limit())
}

/// Rest state (round unit sphere, zero potential) at band `l_max`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pg_state_new(l_max: u32, out: *mut *mut PgState) -> PgStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(PgState(WaveState::rest(l_max as usize))));
        Ok(())
    })
}

/// # Safety
/// `s` must come from `pg_state_new` and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn pg_state_free(s: *mut PgState) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Time of the state, NaN for null.
///
/// # Safety
/// `s` must be a live state handle or null.
#[no_mangle]
pub unsafe extern "C" fn pg_state_time(s: *const PgState) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.0.t)
}

/// Field selector of the state accessors.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgField {
    Zeta = 0,
    Phi = 1,
}

fn field(st: &mut WaveState, f: PgField) -> &mut SphFn {
    match f {
        PgField::Zeta => &mut st.zeta,
        PgField::Phi => &mut st.phi,
    }
}

/// Sets the complex coefficient `(n, m)` of a field. The caller keeps the
/// field real (`c_{n,-m} = (-1)^m conj(c_{n,m})`).
///
/// # Safety
/// `s` must be a live state handle.
#[no_mangle]
pub unsafe extern "C" fn pg_state_set_coeff(s: *mut PgState, f: PgField, n: u32, m: i32, re: f64, im: f64) -> PgStatus {
    guard(|| {
        let st = &mut deref_mut(s, "state")?.0;
        check_mode(st.l_max(), n as usize, m)?;
        field(st, f).set(n as usize, m, C64::new(re, im));
        Ok(())
    })
}

/// Adds `amp` times the real harmonic of degree `n`, order `m` to a field.
///
/// # Safety
/// `s` must be a live state handle.
#[no_mangle]
pub unsafe extern "C" fn pg_state_add_real_mode(s: *mut PgState, f: PgField, n: u32, m: i32, amp: f64) -> PgStatus {
    guard(|| {
        let st = &mut deref_mut(s, "state")?.0;
        let l = st.l_max();
        check_mode(l, n as usize, m)?;
        field(st, f).axpy(amp, &SphFn::real_mode(l, n as usize, m));
        Ok(())
    })
}

/// Reads coefficient `(n, m)` of a field.
///
/// # Safety
/// `s` must be a live state handle, `re` and `im` writable.
#[no_mangle]
pub unsafe extern "C" fn pg_state_get_coeff(
    s: *const PgState,
    f: PgField,
    n: u32,
    m: i32,
    re: *mut f64,
    im: *mut f64,
) -> PgStatus {
    guard(|| {
        let st = &deref(s, "state")?.0;
        check_mode(st.l_max(), n as usize, m)?;
        let v = match f {
            PgField::Zeta => st.zeta.get(n as usize, m),
            PgField::Phi => st.phi.get(n as usize, m),
        };
        *deref_mut(re, "re")? = v.re;
        *deref_mut(im, "im")? = v.im;
        Ok(())
    })
}

/// One RK4 step of size `dt`, in place. On failure the state is unchanged.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn pg_solver_step(solver: *const PgSolver, s: *mut PgState, dt: f64) -> PgStatus {
    guard(|| {
        let sv = &deref(solver, "solver")?.0;
        let st = deref_mut(s, "state")?;
        if st.0.l_max() != sv.cfg.l_max {
            return Err(invalid(format!("state band {} differs from solver band {}", st.0.l_max(), sv.cfg.l_max)));
        }
        st.0 = lib(sv.step(&st.0, dt))?;
        Ok(())
    })
}

/// Conserved quantities of the state.
///
/// # Safety
/// Both handles must be live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pg_solver_conserved(solver: *const PgSolver, s: *const PgState, out: *mut PgConserved) -> PgStatus {
    guard(|| {
        let sv = &deref(solver, "solver")?.0;
        let st = &deref(s, "state")?.0;
        let out = deref_mut(out, "out")?;
        let c = lib(sv.conserved(st))?;
        *out = PgConserved {
            t: c.t,
            volume: c.volume,
            area: c.area,
            kinetic: c.kinetic,
            hamiltonian: c.hamiltonian,
            momentum: c.momentum,
            center: c.center,
        };
        Ok(())
    })
}

/// Mean curvature of the surface `r = 1 + zeta` of the state, returned as
/// `(l_max + 1)^2` complex coefficients packed as `re, im` pairs.
///
/// # Safety
/// `s` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pg_state_mean_curvature(s: *const PgState, out: *mut f64, len: usize) -> PgStatus {
    guard(|| {
        let st = &deref(s, "state")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let h = lib(waves::mean_curvature(&st.zeta))?;
        if len < 2 * h.coeffs.len() {
            return Err(invalid(format!("buffer of {len} doubles, need {}", 2 * h.coeffs.len())));
        }
        let buf = std::slice::from_raw_parts_mut(out, len);
        for (k, c) in h.coeffs.iter().enumerate() {
            buf[2 * k] = c.re;
            buf[2 * k + 1] = c.im;
        }
        Ok(())
    })
}
