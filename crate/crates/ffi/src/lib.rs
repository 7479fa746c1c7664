//! C interface to the tenrpca library.
//!
//! Volumes are `H·W·D` doubles with the row index fastest, then column,
//! then frame. Handles are opaque and owned by the caller, who releases them
//! with the matching `*_free` function. Every fallible call returns a
//! [`TenrpcaStatus`]; on failure [`tenrpca_last_error`] describes the error
//! until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tenrpca::admm::{solve_h, solve_pg, SolveResult, SolverParams};
use tenrpca::compressive::{CompressiveOperator, MeasurementSet, SensingMode};
use tenrpca::Error;

/// Result codes. `TENRPCA_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TenrpcaStatus {
    Ok = 0,
    NullPointer = 1,
    LengthMismatch = 2,
    InvalidUtf8 = 3,
    Panic = 4,
    ShapeMismatch = 10,
    RankOutOfRange = 11,
    InvalidParameter = 12,
    Diverged = 13,
    NumericalError = 14,
    Format = 15,
    Io = 16,
    Json = 17,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TenrpcaMode {
    FrameWise = 0,
    Holistic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TenrpcaModel {
    Holistic = 0,
    PatchGroup = 1,
}

/// Which volume of a solve result to copy out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TenrpcaComponent {
    Reconstruction = 0,
    Background = 1,
    Foreground = 2,
    Disturbance = 3,
}

/// A compressive sensing operator.
pub struct TenrpcaOperator(CompressiveOperator);

/// The outcome of a solve.
pub struct TenrpcaSolveResult(SolveResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> TenrpcaStatus {
    match e {
        Error::ShapeMismatch(_) | Error::ModeOutOfRange { .. } | Error::UnsupportedOrder(_) => TenrpcaStatus::ShapeMismatch,
        Error::RankOutOfRange { .. } => TenrpcaStatus::RankOutOfRange,
        Error::InvalidParameter(_) | Error::InvalidClustering(_) | Error::NotPowerOfTwo(_) => {
            TenrpcaStatus::InvalidParameter
        }
        Error::Diverged { .. } => TenrpcaStatus::Diverged,
        Error::NonFinite | Error::NotSymmetric(_) => TenrpcaStatus::NumericalError,
        Error::Format(_) => TenrpcaStatus::Format,
        Error::Io(_) => TenrpcaStatus::Io,
        Error::Json(_) => TenrpcaStatus::Json,
    }
}

fn fail(status: TenrpcaStatus, msg: impl Into<String>) -> TenrpcaStatus {
    set_error(msg.into());
    status
}

fn guarded(f: impl FnOnce() -> Result<(), TenrpcaStatus>) -> TenrpcaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TenrpcaStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(TenrpcaStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: tenrpca::Result<T>) -> Result<T, TenrpcaStatus> {
    r.map_err(|e| fail(status_of(&e), format!("{}: {e}", e.code())))
}

unsafe fn input<'a>(p: *const f64, len: usize) -> Result<&'a [f64], TenrpcaStatus> {
    if p.is_null() && len > 0 {
        return Err(fail(TenrpcaStatus::NullPointer, "null input buffer"));
    }
    Ok(if len == 0 { &[] } else { std::slice::from_raw_parts(p, len) })
}

unsafe fn output<'a>(p: *mut f64, len: usize, want: usize) -> Result<&'a mut [f64], TenrpcaStatus> {
    if len != want {
        return Err(fail(TenrpcaStatus::LengthMismatch, format!("output buffer holds {len} values, {want} needed")));
    }
    if p.is_null() && len > 0 {
        return Err(fail(TenrpcaStatus::NullPointer, "null output buffer"));
    }
    Ok(if len == 0 { &mut [] } else { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, TenrpcaStatus> {
    p.as_ref().ok_or_else(|| fail(TenrpcaStatus::NullPointer, "null handle"))
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tenrpca_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Builds an operator and stores it in `*out`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tenrpca_operator_new(
    mode: TenrpcaMode,
    height: usize,
    width: usize,
    frames: usize,
    ratio: f64,
    seed: u64,
    out: *mut *mut TenrpcaOperator,
) -> TenrpcaStatus {
    guarded(|| {
        if out.is_null() {
            return Err(fail(TenrpcaStatus::NullPointer, "null output handle"));
        }
        let mode = match mode {
            TenrpcaMode::FrameWise => SensingMode::FrameWise,
            TenrpcaMode::Holistic => SensingMode::Holistic,
        };
        let op = lift(CompressiveOperator::new(mode, [height, width, frames], ratio, seed))?;
        *out = Box::into_raw(Box::new(TenrpcaOperator(op)));
        Ok(())
    })
}

/// # Safety
/// `op` must be null or a handle from [`tenrpca_operator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tenrpca_operator_free(op: *mut TenrpcaOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Number of measurements, or 0 for a null handle.
///
/// # Safety
/// `op` must be null or a live operator handle.
#[no_mangle]
pub unsafe extern "C" fn tenrpca_operator_measurements(op: *const TenrpcaOperator) -> usize {
    op.as_ref().map_or(0, |o| o.0.measurements())
}

/// `y = A(x)`.
///
/// # Safety
/// Buffers must hold the stated number of doubles; `op` must be live.
#[no_mangle]
pub unsafe extern "C" fn tenrpca_operator_apply(
    op: *const TenrpcaOperator,
    x: *const f64,
    x_len: usize,
    y: *mut f64,
    y_len: usize,
) -> TenrpcaStatus {
    guarded(|| {
        let op = &handle(op)?.0;
        let x = input(x, x_len)?;
        let out = output(y, y_len, op.measurements())?;
        out.copy_from_slice(&lift(op.apply(x))?.values);
        Ok(())
    })
}

/// `x = A*(y)`.
///
/// # Safety
/// Buffers must hold the stated number of doubles; `op` must be live.
#[no_mangle]
pub unsafe extern "C" fn tenrpca_operator_adjoint(
    op: *const TenrpcaOperator,
    y: *const f64,
    y_len: usize,
    x: *mut f64,
    x_len: usize,
) -> TenrpcaStatus {
    guarded(|| {
        let op = &handle(op)?.0;
        let y = input(y, y_len)?;
        let out = output(x, x_len, op.signal_len())?;
        out.copy_from_slice(&lift(op.adjoint_values(y))?);
        Ok(())
    })
}

/// Recovers background and foreground from measurements taken with `op`.
/// `params_json` may be null for default parameters; otherwise it is a JSON
/// object with solver parameter fields.
///
/// # Safety
/// `y` must hold `y_len` doubles, `params_json` must be null or a
/// nul-terminated string, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tenrpca_solve(
    op: *const TenrpcaOperator,
    y: *const f64,
    y_len: usize,
    model: TenrpcaModel,
    params_json: *const c_char,
    out: *mut *mut TenrpcaSolveResult,
) -> TenrpcaStatus {
    guarded(|| {
        let op = &handle(op)?.0;
        if out.is_null() {
            return Err(fail(TenrpcaStatus::NullPointer, "null output handle"));
        }
        let values = input(y, y_len)?.to_vec();
        if values.len() != op.measurements() {
            return Err(fail(
                TenrpcaStatus::LengthMismatch,
                format!("{} measurements supplied, operator produces {}", values.len(), op.measurements()),
            ));
        }
        let params: SolverParams = if params_json.is_null() {
            SolverParams::default()
        } else {
            let text = CStr::from_ptr(params_json)
                .to_str()
                .map_err(|_| fail(TenrpcaStatus::InvalidUtf8, "parameters are not valid UTF-8"))?;
            lift(serde_json::from_str(text).map_err(Error::from))?
        };
        let meas = MeasurementSet { values, descriptor: *op.descriptor() };
        let res = lift(match model {
            TenrpcaModel::Holistic => solve_h(&meas, op, &params),
            TenrpcaModel::PatchGroup => solve_pg(&meas, op, &params, None),
        })?;
        *out = Box::into_raw(Box::new(TenrpcaSolveResult(res)));
        Ok(())
    })
}

/// # Safety
/// `res` must be null or a handle from [`tenrpca_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tenrpca_result_free(res: *mut TenrpcaSolveResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Copies one volume of the result into `out`, which holds `len` doubles.
///
/// # Safety
/// `res` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tenrpca_result_component(
    res: *const TenrpcaSolveResult,
    which: TenrpcaComponent,
    out: *mut f64,
    len: usize,
) -> TenrpcaStatus {
    guarded(|| {
        let r = &handle(res)?.0;
        let v = match which {
            TenrpcaComponent::Reconstruction => &r.x0,
            TenrpcaComponent::Background => &r.x1,
            TenrpcaComponent::Foreground => &r.x2,
            TenrpcaComponent::Disturbance => &r.e,
        };
        output(out, len, v.len())?.copy_from_slice(v.data());
        Ok(())
    })
}

/// Iterations run, or 0 for a null handle.
///
/// # Safety
/// `res` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn tenrpca_result_iterations(res: *const TenrpcaSolveResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.diagnostics.len())
}

/// Whether the relative-change tolerance was reached.
///
/// # Safety
/// `res` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn tenrpca_result_converged(res: *const TenrpcaSolveResult) -> bool {
    res.as_ref().is_some_and(|r| r.0.converged)
}
