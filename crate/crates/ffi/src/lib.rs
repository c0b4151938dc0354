//! C ABI for the sampler.
//!
//! Instances and projection schemes live behind opaque handles created by
//! `lll_*_from_*` / `lll_scheme_*` and released with the matching `_free`.
//! Every call returns an [`LllStatus`]; on failure a message is available from
//! [`lll_last_error_message`] on the same thread. Strings returned through
//! out-parameters are owned by the caller and released with
//! [`lll_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lll_sampler::construct::{construct_projection, ConstructionConfig};
use lll_sampler::counting::{approx_count, CountConfig};
use lll_sampler::dynamics::{main_sample, SamplerConfig};
use lll_sampler::formats::{build_coloring_csp, parse_dimacs, parse_hypergraph};
use lll_sampler::lll::find_satisfying;
use lll_sampler::projection::check_admissibility;
use lll_sampler::{chain_rng, AtomicCsp, ProjectionError, ProjectionScheme};

/// Result of every exported call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LllStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    /// No admissible scheme, or the instance is outside the supported regime.
    Regime = 4,
    /// Resampling did not find a satisfying assignment within its budget.
    NotFound = 5,
    /// The sampler returned ERROR (I1 or I2).
    SampleFailed = 6,
    CountFailed = 7,
    /// The output buffer is shorter than the number of variables.
    BufferTooSmall = 8,
    Panic = 9,
}

/// An atomic CSP instance.
pub struct LllCsp {
    csp: AtomicCsp,
}

/// A projection scheme for one instance.
pub struct LllScheme {
    scheme: ProjectionScheme,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: LllStatus, msg: impl Into<String>) -> LllStatus {
    set_error(msg);
    status
}

/// Runs `body`, turning panics into [`LllStatus::Panic`].
fn guarded(body: impl FnOnce() -> LllStatus) -> LllStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(LllStatus::Panic, msg)
        }
    }
}

unsafe fn read_str<'a>(text: *const c_char) -> Result<&'a str, LllStatus> {
    if text.is_null() {
        return Err(fail(LllStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(text)
        .to_str()
        .map_err(|e| fail(LllStatus::InvalidArgument, format!("string is not UTF-8: {e}")))
}

fn regime_status(e: &ProjectionError) -> LllStatus {
    match e {
        ProjectionError::VariableMismatch { .. } | ProjectionError::BadPartition { .. } => LllStatus::InvalidArgument,
        ProjectionError::ConstructionFailed { .. } => LllStatus::NotFound,
        ProjectionError::Regime(_) | ProjectionError::NotAdmissible { .. } => LllStatus::Regime,
    }
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn copy_assignment(values: &[u32], out: *mut u32, len: usize) -> LllStatus {
    if len < values.len() {
        return fail(
            LllStatus::BufferTooSmall,
            format!("buffer holds {len} values, instance has {}", values.len()),
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    LllStatus::Ok
}

/// Message for the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lll_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses DIMACS CNF text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lll_csp_from_dimacs(text: *const c_char, out: *mut *mut LllCsp) -> LllStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LllStatus::NullPointer, "out is null");
        }
        let text = match read_str(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_dimacs(text) {
            Ok(inst) => {
                write_handle(out, LllCsp { csp: inst.csp });
                LllStatus::Ok
            }
            Err(e) => fail(LllStatus::Parse, e.to_string()),
        }
    })
}

/// Builds the proper `q`-coloring instance of a hypergraph given as an edge list.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lll_csp_from_hypergraph(text: *const c_char, q: u32, out: *mut *mut LllCsp) -> LllStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LllStatus::NullPointer, "out is null");
        }
        let text = match read_str(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let graph = match parse_hypergraph(text, None) {
            Ok(g) => g,
            Err(e) => return fail(LllStatus::Parse, e.to_string()),
        };
        match build_coloring_csp(&graph, q) {
            Ok(csp) => {
                write_handle(out, LllCsp { csp });
                LllStatus::Ok
            }
            Err(e) => fail(LllStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Number of variables, or 0 for a null handle.
///
/// # Safety
/// `csp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lll_csp_num_vars(csp: *const LllCsp) -> usize {
    csp.as_ref().map_or(0, |c| c.csp.num_vars())
}

/// Number of constraints, or 0 for a null handle.
///
/// # Safety
/// `csp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lll_csp_num_constraints(csp: *const LllCsp) -> usize {
    csp.as_ref().map_or(0, |c| c.csp.num_constraints())
}

/// # Safety
/// `csp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lll_csp_free(csp: *mut LllCsp) {
    if !csp.is_null() {
        drop(Box::from_raw(csp));
    }
}

/// Constructs an admissible projection scheme, trying the applicable cases
/// in order. Fails with [`LllStatus::Regime`] when none is admissible.
///
/// # Safety
/// `csp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lll_scheme_construct(
    csp: *const LllCsp,
    eta: f64,
    delta: f64,
    seed: u64,
    out: *mut *mut LllScheme,
) -> LllStatus {
    guarded(|| {
        let (Some(csp), false) = (csp.as_ref(), out.is_null()) else {
            return fail(LllStatus::NullPointer, "csp or out is null");
        };
        if !(eta > 0.0 && eta < 0.5) || !(delta > 0.0 && delta < 1.0) {
            return fail(LllStatus::InvalidArgument, "eta must lie in (0, 1/2) and delta in (0, 1)");
        }
        let mut rng = chain_rng(seed, u64::MAX >> 1);
        match construct_projection(&csp.csp, eta, delta, None, &ConstructionConfig::default(), &mut rng) {
            Ok(scheme) => {
                write_handle(out, LllScheme { scheme });
                LllStatus::Ok
            }
            Err(e) => fail(regime_status(&e), e.to_string()),
        }
    })
}

/// The scheme that leaves every value distinguishable.
///
/// # Safety
/// `csp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lll_scheme_identity(csp: *const LllCsp, eta: f64, out: *mut *mut LllScheme) -> LllStatus {
    guarded(|| {
        let (Some(csp), false) = (csp.as_ref(), out.is_null()) else {
            return fail(LllStatus::NullPointer, "csp or out is null");
        };
        if !(eta > 0.0 && eta < 0.5) {
            return fail(LllStatus::InvalidArgument, "eta must lie in (0, 1/2)");
        }
        write_handle(out, LllScheme { scheme: ProjectionScheme::identity(&csp.csp, eta) });
        LllStatus::Ok
    })
}

/// Loads a scheme from its JSON form and checks it against `csp`.
///
/// # Safety
/// `csp` must be a live handle, `json` a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lll_scheme_from_json(
    csp: *const LllCsp,
    json: *const c_char,
    out: *mut *mut LllScheme,
) -> LllStatus {
    guarded(|| {
        let (Some(csp), false) = (csp.as_ref(), out.is_null()) else {
            return fail(LllStatus::NullPointer, "csp or out is null");
        };
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let scheme: ProjectionScheme = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(LllStatus::Parse, e.to_string()),
        };
        if let Err(e) = scheme.check_matches(&csp.csp) {
            return fail(LllStatus::InvalidArgument, e.to_string());
        }
        write_handle(out, LllScheme { scheme });
        LllStatus::Ok
    })
}

/// # Safety
/// `scheme` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lll_scheme_free(scheme: *mut LllScheme) {
    if !scheme.is_null() {
        drop(Box::from_raw(scheme));
    }
}

/// Finds a satisfying assignment by resampling and writes it to `out[0..n]`.
///
/// # Safety
/// `csp` must be a live handle and `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn lll_find(csp: *const LllCsp, delta: f64, seed: u64, out: *mut u32, len: usize) -> LllStatus {
    guarded(|| {
        let (Some(csp), false) = (csp.as_ref(), out.is_null()) else {
            return fail(LllStatus::NullPointer, "csp or out is null");
        };
        if !(delta > 0.0 && delta < 1.0) {
            return fail(LllStatus::InvalidArgument, "delta must lie in (0, 1)");
        }
        match find_satisfying(&csp.csp, delta, &mut chain_rng(seed, 0)) {
            Ok(found) => copy_assignment(&found.values, out, len),
            Err(e) => fail(regime_status(&e), e.to_string()),
        }
    })
}

/// Draws one sample on chain `chain` of `seed` and writes it to `out[0..n]`.
/// `c_t` is the chain-length constant (1 by default).
///
/// # Safety
/// `csp` and `scheme` must be live handles and `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn lll_sample(
    csp: *const LllCsp,
    scheme: *const LllScheme,
    eps: f64,
    c_t: f64,
    seed: u64,
    chain: u64,
    out: *mut u32,
    len: usize,
) -> LllStatus {
    guarded(|| {
        let (Some(csp), Some(scheme), false) = (csp.as_ref(), scheme.as_ref(), out.is_null()) else {
            return fail(LllStatus::NullPointer, "csp, scheme or out is null");
        };
        let (eps_ok, c_t_ok) = (eps > 0.0 && eps < 1.0, c_t >= 0.0);
        if !eps_ok || !c_t_ok {
            return fail(LllStatus::InvalidArgument, "eps must lie in (0, 1) and c_t be non-negative");
        }
        let cfg = SamplerConfig::new(&csp.csp, &scheme.scheme, eps, c_t);
        match main_sample(&csp.csp, &scheme.scheme, cfg, &mut chain_rng(seed, chain)) {
            Ok(run) => match run.result {
                Ok(x) => copy_assignment(&x, out, len),
                Err(e) => fail(LllStatus::SampleFailed, e.to_string()),
            },
            Err(e) => fail(regime_status(&e), e.to_string()),
        }
    })
}

/// Estimates the number of satisfying assignments within a factor `1 + delta`.
///
/// # Safety
/// `csp` and `scheme` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lll_count(
    csp: *const LllCsp,
    scheme: *const LllScheme,
    delta: f64,
    seed: u64,
    out: *mut f64,
) -> LllStatus {
    guarded(|| {
        let (Some(csp), Some(scheme), false) = (csp.as_ref(), scheme.as_ref(), out.is_null()) else {
            return fail(LllStatus::NullPointer, "csp, scheme or out is null");
        };
        match approx_count(&csp.csp, &scheme.scheme, &CountConfig::new(delta), seed) {
            Ok(est) => {
                *out = est.estimate;
                LllStatus::Ok
            }
            Err(lll_sampler::CountError::Config(msg)) => fail(LllStatus::InvalidArgument, msg),
            Err(e) => fail(LllStatus::CountFailed, e.to_string()),
        }
    })
}

/// Writes the admissibility report of `scheme` as a JSON string to `*out`.
/// Release it with [`lll_string_free`].
///
/// # Safety
/// `csp` and `scheme` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lll_check_projection_json(
    csp: *const LllCsp,
    scheme: *const LllScheme,
    eta: f64,
    out: *mut *mut c_char,
) -> LllStatus {
    guarded(|| {
        let (Some(csp), Some(scheme), false) = (csp.as_ref(), scheme.as_ref(), out.is_null()) else {
            return fail(LllStatus::NullPointer, "csp, scheme or out is null");
        };
        match check_admissibility(&csp.csp, &scheme.scheme, eta) {
            Ok(report) => {
                let mut value = serde_json::to_value(&report).expect("report serializes");
                value["admissible"] = report.admissible().into();
                let text = CString::new(value.to_string()).expect("JSON has no NUL");
                *out = text.into_raw();
                LllStatus::Ok
            }
            Err(e) => fail(regime_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lll_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
