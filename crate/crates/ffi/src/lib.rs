//! C ABI for `newfluence`.
//!
//! A model is fitted once with [`nf_model_fit`] and then queried through an
//! opaque [`NfModel`] handle. Every function returns an [`NfStatus`]; on
//! failure a human-readable message is available from [`nf_last_error`] on
//! the calling thread. Arrays are passed as pointer plus length, and feature
//! matrices are row-major `n × p`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use newfluence::influence::loo_betas;
use newfluence::{
    kendall_tau, newton_fit, Dataset, Error, HessianFactor, InfluenceEngine, InfluenceRecord, Loss,
    ObjectiveSpec, Regularizer, RidgeConvention, SolverConfig,
};

/// Squared-error loss `½(y − u)²`.
pub const NF_LOSS_SQUARED: u32 = 0;
/// Logistic loss with labels in {0, 1}.
pub const NF_LOSS_LOGISTIC: u32 = 1;

/// Penalty `λ‖β‖²`.
pub const NF_RIDGE_SQUARED_NORM: u32 = 0;
/// Penalty `(λ/2)‖β‖²`.
pub const NF_RIDGE_HALF_SQUARED_NORM: u32 = 1;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    SingularHessian = 4,
    DegenerateLeverage = 5,
    NotConverged = 6,
    Panic = 7,
}

/// A fitted regularized GLM together with its influence engine.
pub struct NfModel {
    spec: ObjectiveSpec,
    engine: InfluenceEngine,
    solver: SolverConfig,
    loo: OnceLock<DMatrix<f64>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    // Interior NULs cannot be represented in a C string.
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(clean).ok());
}

struct Failure {
    status: NfStatus,
    message: String,
}

impl Failure {
    fn new(status: NfStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Domain(_) => NfStatus::Domain,
            Error::SingularHessian(_) => NfStatus::SingularHessian,
            Error::DegenerateLeverage { .. } => NfStatus::DegenerateLeverage,
            _ => NfStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Outcome) -> NfStatus {
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|payload| {
        let detail = payload
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".to_owned());
        Err(Failure::new(NfStatus::Panic, format!("internal panic: {detail}")))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            NfStatus::Ok
        }
        Err(f) => {
            set_last_error(&f.message);
            f.status
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(NfStatus::NullPointer, format!("{what} is a null pointer"))
}

/// Borrows `len` values from `data`, rejecting null pointers for non-empty input.
///
/// # Safety
/// A non-null `data` must point to `len` readable `f64` values.
unsafe fn input<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

/// Mutable counterpart of [`input`]; a null pointer means "not requested".
///
/// # Safety
/// A non-null `data` must point to `len` writable `f64` values.
unsafe fn output<'a>(data: *mut f64, len: usize) -> Option<&'a mut [f64]> {
    if data.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(data, len))
    }
}

/// # Safety
/// A non-null `model` must come from [`nf_model_fit`] and not have been freed.
unsafe fn model_ref<'a>(model: *const NfModel) -> Result<&'a NfModel, Failure> {
    model.as_ref().ok_or_else(|| null("model"))
}

fn check_len(got: usize, expected: usize, what: &str) -> Outcome {
    if got == expected {
        Ok(())
    } else {
        Err(Failure::new(
            NfStatus::InvalidArgument,
            format!("{what} has length {got}, expected {expected}"),
        ))
    }
}

fn parse_loss(code: u32) -> Result<Loss, Failure> {
    match code {
        NF_LOSS_SQUARED => Ok(Loss::Squared),
        NF_LOSS_LOGISTIC => Ok(Loss::Logistic),
        _ => Err(Failure::new(
            NfStatus::InvalidArgument,
            format!("unknown loss code {code}"),
        )),
    }
}

fn parse_convention(code: u32) -> Result<RidgeConvention, Failure> {
    match code {
        NF_RIDGE_SQUARED_NORM => Ok(RidgeConvention::SquaredNorm),
        NF_RIDGE_HALF_SQUARED_NORM => Ok(RidgeConvention::HalfSquaredNorm),
        _ => Err(Failure::new(
            NfStatus::InvalidArgument,
            format!("unknown ridge convention code {code}"),
        )),
    }
}

/// Fits a ridge-penalized GLM by damped Newton and stores the result in `*out`.
///
/// `features` is row-major `n × p`; `responses` has length `n`. On failure
/// `*out` is set to null.
///
/// # Safety
/// `features` and `responses` must point to `n·p` and `n` readable values;
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn nf_model_fit(
    features: *const f64,
    n: usize,
    p: usize,
    responses: *const f64,
    loss: u32,
    lambda: f64,
    ridge_convention: u32,
    out: *mut *mut NfModel,
) -> NfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let len = n
            .checked_mul(p)
            .ok_or_else(|| Failure::new(NfStatus::InvalidArgument, "n * p overflows"))?;
        let x = input(features, len, "features")?;
        let y = input(responses, n, "responses")?;
        let loss = parse_loss(loss)?;
        let convention = parse_convention(ridge_convention)?;

        let dataset = Dataset::from_row_major(n, p, x, y)?;
        let spec = ObjectiveSpec::new(dataset, loss, Regularizer::Ridge(convention), lambda)?;
        let solver = SolverConfig::default();
        let fit = newton_fit(&spec, &DVector::zeros(p), &solver)?;
        if !fit.converged {
            return Err(Failure::new(
                NfStatus::NotConverged,
                format!(
                    "Newton solver stopped after {} iterations with gradient norm {:.3e}",
                    fit.iterations, fit.grad_norm
                ),
            ));
        }
        let engine = {
            let factor = HessianFactor::build(&spec, &fit.beta, None)?;
            InfluenceEngine::new(&spec, &fit.beta, &factor)?
        };
        let model = NfModel {
            spec,
            engine,
            solver,
            loo: OnceLock::new(),
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Releases a model. Passing null is a no-op.
///
/// # Safety
/// `model` must be null or a handle from [`nf_model_fit`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn nf_model_free(model: *mut NfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the number of training points and features.
///
/// # Safety
/// `model` must be a live handle; `n` and `p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nf_model_dims(model: *const NfModel, n: *mut usize, p: *mut usize) -> NfStatus {
    guard(|| {
        let m = model_ref(model)?;
        if n.is_null() || p.is_null() {
            return Err(null("n or p"));
        }
        *n = m.engine.n();
        *p = m.engine.p();
        Ok(())
    })
}

/// Copies the fitted coefficients into `beta` (length `p`).
///
/// # Safety
/// `model` must be a live handle; `beta` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn nf_model_beta(model: *const NfModel, beta: *mut f64, len: usize) -> NfStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_len(len, m.engine.p(), "beta")?;
        let dst = output(beta, len).ok_or_else(|| null("beta"))?;
        dst.copy_from_slice(m.engine.beta_hat().as_slice());
        Ok(())
    })
}

/// Writes the leverages `H_ii` into `h` (length `n`, may be null) and their
/// sum into `df` (may be null).
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn nf_model_leverage(
    model: *const NfModel,
    h: *mut f64,
    len: usize,
    df: *mut f64,
) -> NfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let hat = m.engine.hat();
        if let Some(dst) = output(h, len) {
            check_len(len, m.engine.n(), "h")?;
            dst.copy_from_slice(hat.h.as_slice());
        }
        if !df.is_null() {
            *df = hat.df;
        }
        Ok(())
    })
}

fn records_for(
    m: &NfModel,
    x0: &[f64],
    y0: f64,
    loo: Option<&DMatrix<f64>>,
) -> Result<Vec<InfluenceRecord>, Failure> {
    check_len(x0.len(), m.engine.p(), "x0")?;
    let test = Dataset::from_row_major(1, x0.len(), x0, &[y0])?;
    Ok(m.engine.evaluate(&test, loo)?)
}

/// Approximate influence of every training point on the loss at `(x0, y0)`.
///
/// Each output (classical IF, leverage-corrected IF, one-step-Newton
/// influence) has length `n` and may be null if not needed.
///
/// # Safety
/// `model` must be a live handle; `x0` must hold `p` readable values; non-null
/// outputs must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn nf_model_influence(
    model: *const NfModel,
    x0: *const f64,
    p: usize,
    y0: f64,
    influence_if: *mut f64,
    influence_corrected: *mut f64,
    influence_new: *mut f64,
    len: usize,
) -> NfStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_len(len, m.engine.n(), "output")?;
        let x0 = input(x0, p, "x0")?;
        let records = records_for(m, x0, y0, None)?;
        type Column = (*mut f64, fn(&InfluenceRecord) -> f64);
        let columns: [Column; 3] = [
            (influence_if, |r| r.i_if),
            (influence_corrected, |r| r.i_if_corrected),
            (influence_new, |r| r.i_new),
        ];
        for (ptr, pick) in columns {
            if let Some(dst) = output(ptr, len) {
                for (d, r) in dst.iter_mut().zip(&records) {
                    *d = pick(r);
                }
            }
        }
        Ok(())
    })
}

/// Exact leave-one-out influence of every training point on the loss at
/// `(x0, y0)`. The first call refits the model `n` times; the refits are
/// cached on the handle.
///
/// # Safety
/// `model` must be a live handle; `x0` must hold `p` readable values; `out`
/// must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn nf_model_true_influence(
    model: *const NfModel,
    x0: *const f64,
    p: usize,
    y0: f64,
    out: *mut f64,
    len: usize,
) -> NfStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_len(len, m.engine.n(), "out")?;
        let x0 = input(x0, p, "x0")?;
        let dst = output(out, len).ok_or_else(|| null("out"))?;
        let loo = match m.loo.get() {
            Some(b) => b,
            None => {
                let b = loo_betas(&m.spec, m.engine.beta_hat(), &m.solver)?;
                m.loo.get_or_init(|| b)
            }
        };
        let records = records_for(m, x0, y0, Some(loo))?;
        for (d, r) in dst.iter_mut().zip(&records) {
            *d = r.i_true.expect("exact influence requested");
        }
        Ok(())
    })
}

/// Kendall's tau-a between two equally long sequences.
///
/// # Safety
/// `a` and `b` must hold `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nf_kendall_tau(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> NfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = input(a, len, "a")?;
        let b = input(b, len, "b")?;
        *out = kendall_tau(a, b)?;
        Ok(())
    })
}

/// Message describing the most recent failure on this thread, or null if the
/// last call succeeded. The string stays valid until the next call into this
/// library on the same thread.
#[no_mangle]
pub extern "C" fn nf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static name of a status code; unknown codes map to "unknown status".
#[no_mangle]
pub extern "C" fn nf_status_string(status: i32) -> *const c_char {
    let s: &'static CStr = match status {
        0 => c"ok",
        1 => c"null pointer",
        2 => c"invalid argument",
        3 => c"domain error",
        4 => c"singular Hessian",
        5 => c"degenerate leverage",
        6 => c"not converged",
        7 => c"internal panic",
        _ => c"unknown status",
    };
    s.as_ptr()
}
