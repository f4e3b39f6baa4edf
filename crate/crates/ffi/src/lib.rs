//! C ABI for `iqvip`.
//!
//! Objects cross the boundary as opaque handles created by the `iqvip_problem_*`,
//! `iqvip_network_*` and solve functions and released with the matching `*_free`. Every call returns an
//! [`IqvipStatus`]; on failure [`iqvip_last_error`] describes the error on the
//! calling thread. Panics never unwind into the caller.
//!
//! Vectors are passed as `(pointer, length)` pairs of finite `double`s. Output buffers
//! must hold at least the problem dimension.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use iqvip::cli::problem_file::ProblemFile;
use iqvip::solvers::{IterTrace, StopReason};
use iqvip::traffic::{flow_map, solve_tolls, TrafficNetwork, UeParams};
use iqvip::{builtin, IqvipError, SolverConfig};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IqvipStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Diverged = 5,
    Infeasible = 6,
    Parse = 7,
    Io = 8,
    BufferTooSmall = 9,
    NotAvailable = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IqvipVariant {
    General = 0,
    Inertial = 1,
    FirstOrder = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IqvipStopReason {
    Residual = 0,
    Error = 1,
    MaxIter = 2,
}

/// Convergence constants of a problem.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IqvipConstants {
    pub lipschitz: f64,
    pub eta: f64,
    pub rho: f64,
    pub mu: f64,
    pub theta: f64,
    pub theta1: f64,
    pub existence_margin: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IqvipStepCertificate {
    pub sigma: f64,
    pub tau: f64,
    pub tau_max: f64,
    pub discrete_ok: bool,
    pub continuous_ok: bool,
}

/// Solver settings. `h` is read by the general variant only; `sigma` is
/// ignored by the first-order variant. Nonpositive stop tolerances disable
/// the rule.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqvipSolverParams {
    pub variant: IqvipVariant,
    pub sigma: f64,
    pub tau: f64,
    pub h: f64,
    pub max_iter: usize,
    pub stop_residual: f64,
    pub stop_error: f64,
}

/// Opaque problem handle.
pub struct IqvipProblemHandle(iqvip::IqvipProblem);

/// Opaque iteration trace handle.
pub struct IqvipTraceHandle(IterTrace);

/// Opaque traffic network handle.
pub struct IqvipNetworkHandle(Arc<TrafficNetwork>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: IqvipStatus,
    message: String,
}

impl Failure {
    fn new(status: IqvipStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<IqvipError> for Failure {
    fn from(e: IqvipError) -> Self {
        let status = match &e {
            IqvipError::DimensionMismatch { .. } => IqvipStatus::DimensionMismatch,
            IqvipError::NonFinite(_) => IqvipStatus::NonFinite,
            IqvipError::SolverDiverged { .. } | IqvipError::TrajectoryDiverged { .. } => {
                IqvipStatus::Diverged
            }
            IqvipError::Unreachable { .. } | IqvipError::NegativeCycle => IqvipStatus::Infeasible,
            IqvipError::Json(_) | IqvipError::Csv(_) | IqvipError::Network(_) => IqvipStatus::Parse,
            IqvipError::Io(_) => IqvipStatus::Io,
            _ => IqvipStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IqvipStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            IqvipStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal panic: {message}"));
            IqvipStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller promises `p` is null or points to a live `T`.
    unsafe { p.as_ref() }.ok_or_else(|| Failure::new(IqvipStatus::NullPointer, format!("`{name}` is null")))
}

fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller promises `p` is null or points to writable memory for a `T`.
    unsafe { p.as_mut() }.ok_or_else(|| Failure::new(IqvipStatus::NullPointer, format!("`{name}` is null")))
}

fn input_slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(IqvipStatus::NullPointer, format!("`{name}` is null")));
    }
    // SAFETY: the caller promises `p` points to `len` readable doubles.
    let v = unsafe { slice::from_raw_parts(p, len) };
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Failure::new(IqvipStatus::NonFinite, format!("`{name}[{i}]` is not finite")));
    }
    Ok(v)
}

fn write_vec(src: &[f64], out: *mut f64, out_len: usize, name: &str) -> Result<(), Failure> {
    if out_len < src.len() {
        return Err(Failure::new(
            IqvipStatus::BufferTooSmall,
            format!("`{name}` holds {out_len} values, {} needed", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(Failure::new(IqvipStatus::NullPointer, format!("`{name}` is null")));
    }
    // SAFETY: `out` points to at least `out_len >= src.len()` writable doubles.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), out, src.len()) };
    Ok(())
}

fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(IqvipStatus::NullPointer, format!("`{name}` is null")));
    }
    // SAFETY: the caller promises a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::new(IqvipStatus::Parse, format!("`{name}` is not UTF-8")))
}

fn constants_to_c(c: &iqvip::CertifiedConstants) -> IqvipConstants {
    IqvipConstants {
        lipschitz: c.lipschitz,
        eta: c.eta,
        rho: c.rho,
        mu: c.mu,
        theta: c.theta,
        theta1: c.theta1,
        existence_margin: c.existence_margin,
    }
}

fn solver_config(params: &IqvipSolverParams) -> SolverConfig {
    let mut config = match params.variant {
        IqvipVariant::Inertial => SolverConfig::inertial(params.sigma, params.tau),
        IqvipVariant::FirstOrder => SolverConfig::first_order(params.tau),
        IqvipVariant::General => SolverConfig::general(params.sigma, params.tau, params.h),
    };
    config.max_iter = params.max_iter;
    config.stop_residual = (params.stop_residual > 0.0).then_some(params.stop_residual);
    config.stop_error = (params.stop_error > 0.0).then_some(params.stop_error);
    config
}

/// Stores a trace in `out` even when the run diverged, so callers can inspect
/// the partial iterates.
fn emit_trace(
    result: iqvip::Result<IterTrace>,
    out: &mut *mut IqvipTraceHandle,
) -> Result<(), Failure> {
    match result {
        Ok(trace) => {
            *out = Box::into_raw(Box::new(IqvipTraceHandle(trace)));
            Ok(())
        }
        Err(IqvipError::SolverDiverged { iteration, partial }) => {
            *out = Box::into_raw(Box::new(IqvipTraceHandle(*partial)));
            Err(Failure::new(IqvipStatus::Diverged, format!("iteration diverged at n = {iteration}")))
        }
        Err(e) => Err(e.into()),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn iqvip_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn iqvip_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn iqvip_compute_constants(
    lipschitz: f64,
    eta: f64,
    rho: f64,
    mu: f64,
    out: *mut IqvipConstants,
) -> IqvipStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = constants_to_c(&iqvip::compute_constants(lipschitz, eta, rho, mu)?);
        Ok(())
    })
}

/// Discrete and continuous step conditions for the pair `(theta, theta1)`.
/// `continuous_ok` is false whenever `tau <= 1`.
#[no_mangle]
pub extern "C" fn iqvip_check_discrete(
    theta: f64,
    theta1: f64,
    sigma: f64,
    tau: f64,
    out: *mut IqvipStepCertificate,
) -> IqvipStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let c = iqvip::check_discrete(iqvip::ThetaPair { theta, theta1 }, sigma, tau);
        *out = IqvipStepCertificate {
            sigma: c.sigma,
            tau: c.tau,
            tau_max: c.tau_max,
            discrete_ok: c.discrete_ok,
            continuous_ok: c.continuous_ok,
        };
        Ok(())
    })
}

/// The built-in two-dimensional example with solution `(0, 0)`.
#[no_mangle]
pub extern "C" fn iqvip_problem_example51(out: *mut *mut IqvipProblemHandle) -> IqvipStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(IqvipProblemHandle(builtin::example51())));
        Ok(())
    })
}

/// Builds an affine problem from a JSON document (`matrix`, `offset`,
/// `lipschitz`, `eta`, `mu`, `family`, `solution`).
#[no_mangle]
pub extern "C" fn iqvip_problem_from_json(
    json: *const c_char,
    out: *mut *mut IqvipProblemHandle,
) -> IqvipStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let problem = ProblemFile::from_json(c_str(json, "json")?)?.build(None)?;
        *out = Box::into_raw(Box::new(IqvipProblemHandle(problem)));
        Ok(())
    })
}

/// Releases a problem; null is ignored.
///
/// # Safety
/// The pointer must be null or a live handle from this library, released once.
#[no_mangle]
pub unsafe extern "C" fn iqvip_problem_free(problem: *mut IqvipProblemHandle) {
    if !problem.is_null() {
        // SAFETY: `problem` came from `Box::into_raw` in this crate and is freed once.
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Dimension of the problem, or 0 for null.
#[no_mangle]
pub extern "C" fn iqvip_problem_dim(problem: *const IqvipProblemHandle) -> usize {
    non_null(problem, "problem").map_or(0, |p| p.0.dim())
}

/// Constants of the problem; `NotAvailable` when the map declares none.
#[no_mangle]
pub extern "C" fn iqvip_problem_constants(
    problem: *const IqvipProblemHandle,
    out: *mut IqvipConstants,
) -> IqvipStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let out = out_ptr(out, "out")?;
        let c = p.0.constants().ok_or_else(|| {
            Failure::new(IqvipStatus::NotAvailable, "the problem declares no (L, eta)")
        })?;
        *out = constants_to_c(&c);
        Ok(())
    })
}

/// Writes `B(x)` to `out`.
#[no_mangle]
pub extern "C" fn iqvip_problem_natural_map(
    problem: *const IqvipProblemHandle,
    x: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> IqvipStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let b = p.0.natural_map(input_slice(x, len, "x")?)?;
        write_vec(&b, out, out_len, "out")
    })
}

/// Writes `‖B(x)‖` to `out`.
#[no_mangle]
pub extern "C" fn iqvip_problem_residual(
    problem: *const IqvipProblemHandle,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> IqvipStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let out = out_ptr(out, "out")?;
        *out = p.0.residual_norm(input_slice(x, len, "x")?)?;
        Ok(())
    })
}

/// Runs the solver from `x0` (with `x_{-1} = x0`). On `Diverged` the partial
/// trace is still stored in `out` and must be freed.
#[no_mangle]
pub extern "C" fn iqvip_solve(
    problem: *const IqvipProblemHandle,
    params: *const IqvipSolverParams,
    x0: *const f64,
    len: usize,
    out: *mut *mut IqvipTraceHandle,
) -> IqvipStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let params = non_null(params, "params")?;
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let x0 = input_slice(x0, len, "x0")?;
        emit_trace(iqvip::solve(&p.0, x0, None, &solver_config(params)), out)
    })
}

/// Releases a trace; null is ignored.
///
/// # Safety
/// The pointer must be null or a live handle from this library, released once.
#[no_mangle]
pub unsafe extern "C" fn iqvip_trace_free(trace: *mut IqvipTraceHandle) {
    if !trace.is_null() {
        // SAFETY: `trace` came from `Box::into_raw` in this crate and is freed once.
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Number of recorded iterates (steps used plus one), or 0 for null.
#[no_mangle]
pub extern "C" fn iqvip_trace_len(trace: *const IqvipTraceHandle) -> usize {
    non_null(trace, "trace").map_or(0, |t| t.0.records.len())
}

#[no_mangle]
pub extern "C" fn iqvip_trace_steps_used(trace: *const IqvipTraceHandle) -> usize {
    non_null(trace, "trace").map_or(0, |t| t.0.steps_used)
}

#[no_mangle]
pub extern "C" fn iqvip_trace_stop_reason(
    trace: *const IqvipTraceHandle,
    out: *mut IqvipStopReason,
) -> IqvipStatus {
    guard(|| {
        let t = non_null(trace, "trace")?;
        *out_ptr(out, "out")? = match t.0.stop_reason {
            StopReason::Residual => IqvipStopReason::Residual,
            StopReason::Error => IqvipStopReason::Error,
            StopReason::MaxIter => IqvipStopReason::MaxIter,
        };
        Ok(())
    })
}

fn record(trace: *const IqvipTraceHandle, index: usize) -> Result<&'static iqvip::IterRecord, Failure> {
    let t: &'static IqvipTraceHandle = non_null(trace, "trace")?;
    t.0.records.get(index).ok_or_else(|| {
        Failure::new(
            IqvipStatus::InvalidArgument,
            format!("index {index} out of range for {} iterates", t.0.records.len()),
        )
    })
}

/// Copies iterate `index` into `out`.
#[no_mangle]
pub extern "C" fn iqvip_trace_point(
    trace: *const IqvipTraceHandle,
    index: usize,
    out: *mut f64,
    out_len: usize,
) -> IqvipStatus {
    guard(|| write_vec(&record(trace, index)?.x, out, out_len, "out"))
}

#[no_mangle]
pub extern "C" fn iqvip_trace_residual(
    trace: *const IqvipTraceHandle,
    index: usize,
    out: *mut f64,
) -> IqvipStatus {
    guard(|| {
        let r = record(trace, index)?;
        *out_ptr(out, "out")? = r.residual;
        Ok(())
    })
}

/// `‖x_n - x*‖`; `NotAvailable` when the problem has no known solution.
#[no_mangle]
pub extern "C" fn iqvip_trace_error(
    trace: *const IqvipTraceHandle,
    index: usize,
    out: *mut f64,
) -> IqvipStatus {
    guard(|| {
        let r = record(trace, index)?;
        let e = r.error.ok_or_else(|| Failure::new(IqvipStatus::NotAvailable, "no known solution"))?;
        *out_ptr(out, "out")? = e;
        Ok(())
    })
}

/// Fitted linear rate `q` and its `r²` over the trailing `tail_fraction`.
#[no_mangle]
pub extern "C" fn iqvip_trace_linear_rate(
    trace: *const IqvipTraceHandle,
    tail_fraction: f64,
    q: *mut f64,
    r_squared: *mut f64,
) -> IqvipStatus {
    guard(|| {
        let t = non_null(trace, "trace")?;
        let q = out_ptr(q, "q")?;
        let r2 = out_ptr(r_squared, "r_squared")?;
        let rate = iqvip::estimate_linear_rate(&t.0, tail_fraction)?;
        *q = rate.q;
        *r2 = rate.r_squared;
        Ok(())
    })
}

/// The shipped synthetic four-bridge network.
#[no_mangle]
pub extern "C" fn iqvip_network_traffic_demo(out: *mut *mut IqvipNetworkHandle) -> IqvipStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(IqvipNetworkHandle(Arc::new(builtin::traffic_demo()))));
        Ok(())
    })
}

/// Parses a network document (`nodes`, `links`, `od`, `controlled`).
#[no_mangle]
pub extern "C" fn iqvip_network_from_json(
    json: *const c_char,
    out: *mut *mut IqvipNetworkHandle,
) -> IqvipStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let net = TrafficNetwork::from_json(c_str(json, "json")?)?;
        *out = Box::into_raw(Box::new(IqvipNetworkHandle(Arc::new(net))));
        Ok(())
    })
}

/// Releases a network; null is ignored.
///
/// # Safety
/// The pointer must be null or a live handle from this library, released once.
#[no_mangle]
pub unsafe extern "C" fn iqvip_network_free(net: *mut IqvipNetworkHandle) {
    if !net.is_null() {
        // SAFETY: `net` came from `Box::into_raw` in this crate and is freed once.
        drop(unsafe { Box::from_raw(net) });
    }
}

/// Number of tolled links, or 0 for null.
#[no_mangle]
pub extern "C" fn iqvip_network_controlled_count(net: *const IqvipNetworkHandle) -> usize {
    non_null(net, "net").map_or(0, |n| n.0.controlled_count())
}

/// Equilibrium flows on the tolled links under `tolls`, to relative gap
/// `gap_tol` (nonpositive selects the default).
#[no_mangle]
pub extern "C" fn iqvip_flow_map(
    net: *const IqvipNetworkHandle,
    tolls: *const f64,
    len: usize,
    gap_tol: f64,
    out: *mut f64,
    out_len: usize,
) -> IqvipStatus {
    guard(|| {
        let n = non_null(net, "net")?;
        let flows = flow_map(&n.0, input_slice(tolls, len, "tolls")?, &ue_params(gap_tol))?;
        write_vec(&flows, out, out_len, "out")
    })
}

/// Toll iteration from zero tolls. Trace points are toll vectors and
/// residuals are `‖P_psi(x)(V(x) + mu x) - V(x)‖`.
#[no_mangle]
pub extern "C" fn iqvip_solve_tolls(
    net: *const IqvipNetworkHandle,
    mu: f64,
    params: *const IqvipSolverParams,
    gap_tol: f64,
    out: *mut *mut IqvipTraceHandle,
) -> IqvipStatus {
    guard(|| {
        let n = non_null(net, "net")?;
        let params = non_null(params, "params")?;
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let result = solve_tolls(&n.0, mu, &solver_config(params), &ue_params(gap_tol)).map(|r| r.trace);
        emit_trace(result, out)
    })
}

fn ue_params(gap_tol: f64) -> UeParams {
    let mut ue = UeParams::default();
    if gap_tol > 0.0 {
        ue.gap_tol = gap_tol;
    }
    ue
}
