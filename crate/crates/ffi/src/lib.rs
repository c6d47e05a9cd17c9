//! C interface to `cavity_lb`.
//!
//! Every function returns a [`CavityStatus`]; results go through out
//! pointers. After a failure, `cavity_last_error` returns a message for the
//! calling thread. Handles come from `cavity_policy_parse` and
//! `cavity_curve_solve` and are released with the matching `*_free`. Pointer arguments must be null or
//! valid for the access the function makes.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cavity_lb::assumptions::{check_assumption, CheckOptions};
use cavity_lb::closed_form::{lldp_mean_queue, LLdpParams};
use cavity_lb::limits::heavy_traffic_limit;
use cavity_lb::ode::{mean_waiting, solve_ccdf, SolverOptions, WorkloadCurve};
use cavity_lb::policy::{choose_b, fixed_point_u, p_idle, t_map, PolicySpec};
use cavity_lb::sim::{simulate, SimConfig};
use cavity_lb::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CavityStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Panic = 4,
    InvalidLambda = 10,
    InvalidPolicy = 11,
    InvalidArgument = 12,
    InvalidBoundary = 13,
    UnsupportedPolicy = 14,
    Config = 15,
    NoRoot = 20,
    NonConvergence = 21,
    StepUnderflow = 22,
    Inconsistent = 23,
    Divergence = 24,
    BNotFound = 25,
    ExtrapolationUnstable = 26,
    ConstructionFailed = 27,
}

impl From<&Error> for CavityStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidLambda(_) => Self::InvalidLambda,
            Error::InvalidPolicy(_) => Self::InvalidPolicy,
            Error::InvalidArgument(_) => Self::InvalidArgument,
            Error::InvalidBoundary { .. } => Self::InvalidBoundary,
            Error::UnsupportedPolicy(_) => Self::UnsupportedPolicy,
            Error::Config(_) => Self::Config,
            Error::NoRoot { .. } => Self::NoRoot,
            Error::NonConvergence { .. } => Self::NonConvergence,
            Error::StepUnderflow { .. } => Self::StepUnderflow,
            Error::Inconsistent { .. } => Self::Inconsistent,
            Error::Divergence { .. } => Self::Divergence,
            Error::BNotFound { .. } => Self::BNotFound,
            Error::ExtrapolationUnstable { .. } => Self::ExtrapolationUnstable,
            Error::ConstructionFailed(_) => Self::ConstructionFailed,
        }
    }
}

/// Opaque policy handle.
pub struct CavityPolicy {
    spec: PolicySpec,
}

/// Opaque handle to a solved workload ccdf.
pub struct CavityCurve {
    curve: WorkloadCurve,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

struct Failure(CavityStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(CavityStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CavityStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CavityStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CavityStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CavityStatus::Panic
        }
    }
}

unsafe fn policy_ref<'a>(p: *const CavityPolicy) -> Result<&'a PolicySpec, Failure> {
    p.as_ref().map(|p| &p.spec).ok_or_else(|| null("policy"))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn slice<'a>(data: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null("array"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

/// Message describing the last failure on this thread; empty after a
/// success. The pointer stays valid until the next call on the thread.
#[no_mangle]
pub extern "C" fn cavity_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cavity_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a policy such as `ll:d=2` or `lldk:d=4,k=2`.
/// `spec` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cavity_policy_parse(
    spec: *const c_char,
    out: *mut *mut CavityPolicy,
) -> CavityStatus {
    guard(|| {
        if spec.is_null() {
            return Err(null("spec"));
        }
        let text = CStr::from_ptr(spec)
            .to_str()
            .map_err(|_| Failure(CavityStatus::InvalidUtf8, "spec is not UTF-8".into()))?;
        let spec: PolicySpec = text.parse()?;
        write(out, Box::into_raw(Box::new(CavityPolicy { spec })))
    })
}

/// `policy` must come from `cavity_policy_parse` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cavity_policy_free(policy: *mut CavityPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Writes the canonical policy string into `buf`. `needed` (if not null)
/// receives the size including the terminator; a short buffer gives
/// `CAVITY_STATUS_BUFFER_TOO_SMALL`.
/// `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cavity_policy_describe(
    policy: *const CavityPolicy,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> CavityStatus {
    guard(|| {
        let text = policy_ref(policy)?.to_string();
        let size = text.len() + 1;
        if !needed.is_null() {
            needed.write(size);
        }
        if buf.is_null() || len < size {
            return Err(Failure(
                CavityStatus::BufferTooSmall,
                format!("need {size} bytes"),
            ));
        }
        std::ptr::copy_nonoverlapping(text.as_ptr().cast(), buf, text.len());
        buf.add(text.len()).write(0);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cavity_t_map(
    policy: *const CavityPolicy,
    lambda: f64,
    u: f64,
    out: *mut f64,
) -> CavityStatus {
    guard(|| write(out, t_map(policy_ref(policy)?, lambda, u)?))
}

/// Largest fixed point `u_lambda > 1` of `T(u) = u`.
#[no_mangle]
pub unsafe extern "C" fn cavity_fixed_point(
    policy: *const CavityPolicy,
    lambda: f64,
    out: *mut f64,
) -> CavityStatus {
    guard(|| write(out, fixed_point_u(policy_ref(policy)?, lambda)?.u_lambda))
}

#[no_mangle]
pub unsafe extern "C" fn cavity_p_idle(
    policy: *const CavityPolicy,
    lambda: f64,
    out: *mut f64,
) -> CavityStatus {
    guard(|| write(out, p_idle(policy_ref(policy)?, lambda)?))
}

/// Mean-field mean waiting time.
#[no_mangle]
pub unsafe extern "C" fn cavity_mean_waiting(
    policy: *const CavityPolicy,
    lambda: f64,
    out: *mut f64,
) -> CavityStatus {
    guard(|| write(out, mean_waiting(policy_ref(policy)?, lambda)?))
}

/// Closed-form limit of `-E[W] / log(1 - lambda)` as `lambda -> 1`.
#[no_mangle]
pub unsafe extern "C" fn cavity_heavy_traffic_limit(
    policy: *const CavityPolicy,
    out: *mut f64,
) -> CavityStatus {
    guard(|| write(out, heavy_traffic_limit(policy_ref(policy)?)?))
}

/// `grid` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cavity_choose_b(
    policy: *const CavityPolicy,
    grid: *const f64,
    len: usize,
    out: *mut u32,
) -> CavityStatus {
    guard(|| write(out, choose_b(policy_ref(policy)?, slice(grid, len)?)?))
}

/// Runs assumption check `id` (1 to 7) on `grid`; `passed` receives 1 or 0.
/// `grid` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cavity_check_assumption(
    policy: *const CavityPolicy,
    id: u8,
    grid: *const f64,
    len: usize,
    passed: *mut i32,
) -> CavityStatus {
    guard(|| {
        let report = check_assumption(
            policy_ref(policy)?,
            id,
            slice(grid, len)?,
            &CheckOptions::default(),
        )?;
        write(passed, report.passed() as i32)
    })
}

/// Mean queue length of LL(d) applied with probability `p`.
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cavity_lldp_mean_queue(
    d: u32,
    p: f64,
    lambda: f64,
    out: *mut f64,
) -> CavityStatus {
    guard(|| {
        write(
            out,
            lldp_mean_queue(&LLdpParams::new(d, p, lambda)?, 1e-15)?.value,
        )
    })
}

/// Solves the cavity equation. A NaN `boundary` selects the policy's
/// default value of `F(0)`.
#[no_mangle]
pub unsafe extern "C" fn cavity_curve_solve(
    policy: *const CavityPolicy,
    lambda: f64,
    boundary: f64,
    out: *mut *mut CavityCurve,
) -> CavityStatus {
    guard(|| {
        let spec = policy_ref(policy)?;
        let boundary = if boundary.is_nan() {
            spec.default_boundary(lambda)
        } else {
            boundary
        };
        let curve = solve_ccdf(spec, lambda, boundary, &SolverOptions::default())?;
        write(out, Box::into_raw(Box::new(CavityCurve { curve })))
    })
}

/// `curve` must come from `cavity_curve_solve` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cavity_curve_free(curve: *mut CavityCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

unsafe fn curve_ref<'a>(c: *const CavityCurve) -> Result<&'a WorkloadCurve, Failure> {
    c.as_ref().map(|c| &c.curve).ok_or_else(|| null("curve"))
}

/// `F(w)`; beyond the integration window the certified exponential tail is
/// used.
#[no_mangle]
pub unsafe extern "C" fn cavity_curve_ccdf(
    curve: *const CavityCurve,
    w: f64,
    out: *mut f64,
) -> CavityStatus {
    guard(|| {
        if w.is_nan() || w < 0.0 {
            return Err(Error::InvalidArgument(format!("w = {w} must be nonnegative")).into());
        }
        write(out, curve_ref(curve)?.ccdf(w))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cavity_curve_mean_workload(
    curve: *const CavityCurve,
    out: *mut f64,
) -> CavityStatus {
    guard(|| write(out, curve_ref(curve)?.mean_workload()))
}

#[no_mangle]
pub unsafe extern "C" fn cavity_curve_mean_waiting(
    curve: *const CavityCurve,
    out: *mut f64,
) -> CavityStatus {
    guard(|| write(out, curve_ref(curve)?.mean_waiting()))
}

/// Finite-N simulation; writes the mean waiting time and its standard error.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn cavity_simulate(
    policy: *const CavityPolicy,
    lambda: f64,
    n_servers: usize,
    horizon: f64,
    seed: u64,
    replications: usize,
    mean_wait: *mut f64,
    stderr: *mut f64,
) -> CavityStatus {
    guard(|| {
        if mean_wait.is_null() || stderr.is_null() {
            return Err(null("output pointer"));
        }
        let mut config = SimConfig::new(policy_ref(policy)?.clone(), lambda, n_servers, horizon);
        config.seed = seed;
        config.replications = replications;
        let report = simulate(&config)?;
        write(mean_wait, report.mean_wait)?;
        write(stderr, report.stderr)
    })
}
