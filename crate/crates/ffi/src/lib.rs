//! C ABI over `ldp-numeric`.
//!
//! Every fallible call returns an [`LdpStatus`] and writes its result through
//! an out-pointer. On failure [`ldp_last_error_message`] describes the most
//! recent error on the calling thread. Handles are opaque and must be released
//! with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ldp_numeric::multidim::{choose_k, TuplePerturber};
use ldp_numeric::params::{summarize, worst_case_variance};
use ldp_numeric::{LdpError, Mechanism, MechanismKind, PrivacyBudget, RandomStream};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidBudget = 2,
    InputOutOfRange = 3,
    InvalidArgument = 4,
    NotDiscretizable = 5,
    DimensionMismatch = 6,
    /// A solver failed or the library panicked.
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LdpMechanismKind {
    Laplace = 0,
    Duchi = 1,
    Pm = 2,
    PmOpt = 3,
    PmSub = 4,
    ThreeOutputs = 5,
    Hm = 6,
    HmTp = 7,
}

impl From<LdpMechanismKind> for MechanismKind {
    fn from(k: LdpMechanismKind) -> Self {
        match k {
            LdpMechanismKind::Laplace => Self::Laplace,
            LdpMechanismKind::Duchi => Self::Duchi,
            LdpMechanismKind::Pm => Self::Pm,
            LdpMechanismKind::PmOpt => Self::PmOpt,
            LdpMechanismKind::PmSub => Self::PmSub,
            LdpMechanismKind::ThreeOutputs => Self::ThreeOutputs,
            LdpMechanismKind::Hm => Self::Hm,
            LdpMechanismKind::HmTp => Self::HmTp,
        }
    }
}

/// Seeded random stream.
pub struct LdpStream(RandomStream);

/// Mechanism with its constants solved for one budget.
pub struct LdpMechanism(Mechanism);

/// Derived constants for one budget.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LdpParams {
    pub epsilon: f64,
    /// Probability of the zero output at input 0.
    pub three_outputs_a: f64,
    pub three_outputs_b: f64,
    /// Magnitude of the nonzero outputs.
    pub three_outputs_c: f64,
    pub pm_opt_t: f64,
    pub pm_sub_t: f64,
    /// Probability that the hybrid uses its piecewise branch.
    pub hm_tp_beta: f64,
    pub hm_q: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LdpSamplingPlan {
    pub d: usize,
    pub k: usize,
    pub per_coord_epsilon: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(LdpStatus, String);

impl From<LdpError> for Failure {
    fn from(e: LdpError) -> Self {
        let status = match e {
            LdpError::InvalidBudget(_) => LdpStatus::InvalidBudget,
            LdpError::InputOutOfRange(_) | LdpError::OutsideGrid { .. } => {
                LdpStatus::InputOutOfRange
            }
            LdpError::NotDiscretizable(_) => LdpStatus::NotDiscretizable,
            LdpError::DimensionMismatch { .. } => LdpStatus::DimensionMismatch,
            LdpError::SolverInconsistency(_) => LdpStatus::Internal,
            _ => LdpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LdpStatus::NullPointer, format!("{what} is null"))
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            LdpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            LdpStatus::Internal
        }
    }
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ldp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Returns null only on allocation failure.
#[no_mangle]
pub extern "C" fn ldp_stream_new(seed: u64) -> *mut LdpStream {
    catch_unwind(|| Box::into_raw(Box::new(LdpStream(RandomStream::new(seed)))))
        .unwrap_or(ptr::null_mut())
}

/// # Safety
/// `stream` is null or came from [`ldp_stream_new`] and was not freed.
#[no_mangle]
pub unsafe extern "C" fn ldp_stream_free(stream: *mut LdpStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Words drawn so far, or 0 for a null stream.
///
/// # Safety
/// `stream` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ldp_stream_position(stream: *const LdpStream) -> u64 {
    stream.as_ref().map_or(0, |s| s.0.position())
}

/// # Safety
/// `out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_mechanism_new(
    kind: LdpMechanismKind,
    epsilon: f64,
    out: *mut *mut LdpMechanism,
) -> LdpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = Mechanism::new(kind.into(), PrivacyBudget::new(epsilon)?)?;
        write(out, Box::into_raw(Box::new(LdpMechanism(m))), "out")
    })
}

/// # Safety
/// `mechanism` is null or came from [`ldp_mechanism_new`] and was not freed.
#[no_mangle]
pub unsafe extern "C" fn ldp_mechanism_free(mechanism: *mut LdpMechanism) {
    if !mechanism.is_null() {
        drop(Box::from_raw(mechanism));
    }
}

/// # Safety
/// Handles are live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_mechanism_perturb(
    mechanism: *const LdpMechanism,
    x: f64,
    stream: *mut LdpStream,
    out: *mut f64,
) -> LdpStatus {
    guard(|| {
        let m = mechanism.as_ref().ok_or_else(|| null("mechanism"))?;
        let s = handle(stream, "stream")?;
        let y = m.0.perturb(x, &mut s.0)?;
        write(out, y, "out")
    })
}

/// Perturbs, then rounds onto the `2m + 1` atoms of the output range.
///
/// # Safety
/// Handles are live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_mechanism_perturb_discrete(
    mechanism: *const LdpMechanism,
    x: f64,
    m: u32,
    stream: *mut LdpStream,
    out: *mut f64,
) -> LdpStatus {
    guard(|| {
        let mech = mechanism.as_ref().ok_or_else(|| null("mechanism"))?;
        let s = handle(stream, "stream")?;
        let y = mech.0.perturb_discrete(x, m, &mut s.0)?;
        write(out, y, "out")
    })
}

/// Output variance at input `x`.
///
/// # Safety
/// `mechanism` is live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_mechanism_variance(
    mechanism: *const LdpMechanism,
    x: f64,
    out: *mut f64,
) -> LdpStatus {
    guard(|| {
        let m = mechanism.as_ref().ok_or_else(|| null("mechanism"))?;
        if !(x.is_finite() && x.abs() <= 1.0) {
            return Err(LdpError::InputOutOfRange(x).into());
        }
        write(out, m.0.variance_profile().at(x), "out")
    })
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_worst_case_variance(
    kind: LdpMechanismKind,
    epsilon: f64,
    out: *mut f64,
) -> LdpStatus {
    guard(|| {
        let v = worst_case_variance(kind.into(), PrivacyBudget::new(epsilon)?)?;
        write(out, v, "out")
    })
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_params(epsilon: f64, out: *mut LdpParams) -> LdpStatus {
    guard(|| {
        let s = summarize(PrivacyBudget::new(epsilon)?)?;
        let p = LdpParams {
            epsilon: s.epsilon,
            three_outputs_a: s.three_outputs.a,
            three_outputs_b: s.three_outputs.b,
            three_outputs_c: s.three_outputs.c_mag,
            pm_opt_t: s.t_opt,
            pm_sub_t: s.t_pm_sub,
            hm_tp_beta: s.hm_tp.beta,
            hm_q: s.hm_q,
        };
        write(out, p, "out")
    })
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_choose_k(
    d: usize,
    epsilon: f64,
    out: *mut LdpSamplingPlan,
) -> LdpStatus {
    guard(|| {
        let plan = choose_k(d, PrivacyBudget::new(epsilon)?)?;
        let p = LdpSamplingPlan {
            d: plan.d,
            k: plan.k,
            per_coord_epsilon: plan.per_coord_budget.epsilon(),
        };
        write(out, p, "out")
    })
}

/// Perturbs a `d`-dimensional tuple; `grid_m = 0` skips rounding.
/// Unsampled coordinates of `out` are set to 0.
///
/// # Safety
/// `x` and `out` each point to `d` doubles; `stream` is live.
#[no_mangle]
pub unsafe extern "C" fn ldp_perturb_tuple(
    kind: LdpMechanismKind,
    epsilon: f64,
    x: *const f64,
    d: usize,
    grid_m: u32,
    stream: *mut LdpStream,
    out: *mut f64,
) -> LdpStatus {
    guard(|| {
        if x.is_null() {
            return Err(null("x"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let s = handle(stream, "stream")?;
        let grid = (grid_m > 0).then_some(grid_m);
        let p = TuplePerturber::new(kind.into(), d, PrivacyBudget::new(epsilon)?, grid)?;
        let x = std::slice::from_raw_parts(x, d);
        let out = std::slice::from_raw_parts_mut(out, d);
        p.perturb_into(x, out, &mut Vec::with_capacity(d), &mut s.0)?;
        Ok(())
    })
}
