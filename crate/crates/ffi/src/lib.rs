//! C ABI over `mps_capacity`.
//!
//! Conventions:
//! - every fallible function returns an [`MpscapStatus`]; results go through
//!   out-pointers that are written only on success,
//! - models and distributions are opaque heap handles released with their
//!   `*_free` function (passing NULL to a free function is a no-op),
//! - after a failure, [`mpscap_last_error_message`] copies a description of
//!   the most recent error on the calling thread,
//! - panics never cross the boundary; they surface as
//!   `MPSCAP_STATUS_PANIC`.
//!
//! The header `include/mps_capacity.h` is generated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mps_capacity::capacity::capacity_estimate_with;
use mps_capacity::closed_form::{aklt_capacity, mg_capacity};
use mps_capacity::diag::{enumerate_distribution, shannon_entropy, string_probability, DiagDistribution};
use mps_capacity::error::Error;
use mps_capacity::mps::{aklt_ground_theta, aklt_model, mg_model, model_from_json_str, validate_model, MpsModel};

/// Result codes shared by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpscapStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Dimension = 3,
    Convergence = 4,
    Resource = 5,
    InvalidModel = 6,
    Io = 7,
    Parse = 8,
    BufferTooSmall = 9,
    IndexOutOfRange = 10,
    Panic = 11,
}

impl From<&Error> for MpscapStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => MpscapStatus::Domain,
            Error::Dimension(_) => MpscapStatus::Dimension,
            Error::Convergence { .. } => MpscapStatus::Convergence,
            Error::Resource(_) => MpscapStatus::Resource,
            Error::InvalidModel(_) => MpscapStatus::InvalidModel,
            Error::Io { .. } => MpscapStatus::Io,
            Error::Json(_) | Error::Csv(_) => MpscapStatus::Parse,
        }
    }
}

/// Opaque MPS model handle.
pub struct MpscapModel {
    inner: MpsModel,
}

/// Opaque diagonal-distribution handle.
pub struct MpscapDistribution {
    inner: DiagDistribution,
}

/// Capacity numbers at one block length.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MpscapCapacity {
    pub n: usize,
    /// Closed-form capacity; NaN for custom models.
    pub closed_form: f64,
    /// `log2 d - H_n / n`.
    pub estimate_avg: f64,
    /// `log2 d - (H_n - H_{n-1})`.
    pub estimate_cond: f64,
    pub pruned_mass: f64,
    /// Difference between the distribution and channel entropy paths; NaN
    /// when the channel was not built (n > 4).
    pub channel_path_difference: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: MpscapStatus, msg: impl Into<String>) -> MpscapStatus {
    set_last_error(msg.into());
    status
}

/// Runs `f`, translating library errors and panics into status codes.
fn guard<F>(f: F) -> MpscapStatus
where
    F: FnOnce() -> Result<(), MpscapStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            MpscapStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(MpscapStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lib<T>(r: mps_capacity::error::Result<T>) -> Result<T, MpscapStatus> {
    r.map_err(|e| fail(MpscapStatus::from(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), MpscapStatus> {
    if p.is_null() {
        Err(fail(MpscapStatus::NullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

fn boxed_model(m: MpsModel) -> *mut MpscapModel {
    Box::into_raw(Box::new(MpscapModel { inner: m }))
}

/// Copies the last error message on this thread into `buf` (NUL
/// terminated, truncated to `cap`). Returns the full message length in
/// bytes, excluding the terminator. `buf` may be NULL to query the length.
///
/// # Safety
/// `buf` must be NULL or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mpscap_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// `arccos(sqrt(2/3))`, the AKLT ground-state angle.
#[no_mangle]
pub extern "C" fn mpscap_aklt_ground_theta() -> f64 {
    aklt_ground_theta()
}

/// Closed-form AKLT capacity `log2 3 - h2(theta)`.
#[no_mangle]
pub extern "C" fn mpscap_aklt_capacity(theta: f64) -> f64 {
    aklt_capacity(theta)
}

/// Closed-form MG capacity; `g` must lie in `[0, 1)`.
///
/// # Safety
/// `out` must be NULL or valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn mpscap_mg_capacity(g: f64, out: *mut f64) -> MpscapStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lib(mg_capacity(g))?;
        Ok(())
    })
}

/// Creates the AKLT model at angle `theta` (radians).
///
/// # Safety
/// `out` must be NULL or valid for a write of one pointer.
#[no_mangle]
pub unsafe extern "C" fn mpscap_model_aklt(theta: f64, out: *mut *mut MpscapModel) -> MpscapStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = boxed_model(lib(aklt_model(theta))?);
        Ok(())
    })
}

/// Creates the Majumdar–Ghosh model at `g` in `[0, 1)`.
///
/// # Safety
/// `out` must be NULL or valid for a write of one pointer.
#[no_mangle]
pub unsafe extern "C" fn mpscap_model_mg(g: f64, out: *mut *mut MpscapModel) -> MpscapStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = boxed_model(lib(mg_model(g))?);
        Ok(())
    })
}

/// Creates a custom model from its JSON description
/// (`{"d", "D", "kraus", "rho"?, "label"?}`).
///
/// # Safety
/// `json` must be NULL or a valid NUL-terminated string; `out` must be NULL
/// or valid for a write of one pointer.
#[no_mangle]
pub unsafe extern "C" fn mpscap_model_from_json(json: *const c_char, out: *mut *mut MpscapModel) -> MpscapStatus {
    guard(|| {
        non_null(json, "json")?;
        non_null(out, "out")?;
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| fail(MpscapStatus::Parse, format!("json is not UTF-8: {e}")))?;
        *out = boxed_model(lib(model_from_json_str(text))?);
        Ok(())
    })
}

/// Releases a model handle.
///
/// # Safety
/// `model` must be NULL or a handle from an `mpscap_model_*` constructor
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mpscap_model_free(model: *mut MpscapModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Physical dimension `d`; 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpscap_model_local_dim(model: *const MpscapModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.local_dim())
}

/// Bond dimension `D`; 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpscap_model_bond_dim(model: *const MpscapModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.bond_dim())
}

/// Largest residual among completeness, invariance, hermiticity,
/// positivity and trace of the invariant state.
///
/// # Safety
/// `model` must be NULL or a live handle; `worst` must be NULL or valid for
/// a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn mpscap_model_validate(model: *const MpscapModel, worst: *mut f64) -> MpscapStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(worst, "worst")?;
        let rep = lib(validate_model(&(*model).inner))?;
        *worst = rep.worst().value;
        Ok(())
    })
}

/// Probability of one string of 1-based symbols.
///
/// # Safety
/// `model` must be NULL or a live handle; `symbols` must point to `len`
/// bytes; `out` must be NULL or valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn mpscap_string_probability(
    model: *const MpscapModel,
    symbols: *const u8,
    len: usize,
    out: *mut f64,
) -> MpscapStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let s: &[u8] = if len == 0 {
            &[]
        } else {
            non_null(symbols, "symbols")?;
            std::slice::from_raw_parts(symbols, len)
        };
        *out = lib(string_probability(&(*model).inner, s))?;
        Ok(())
    })
}

/// Enumerates the length-`n` diagonal distribution, cutting branches whose
/// partial product has max-abs entry `<= prune_tol` (0 disables pruning).
///
/// # Safety
/// `model` must be NULL or a live handle; `out` must be NULL or valid for a
/// write of one pointer.
#[no_mangle]
pub unsafe extern "C" fn mpscap_distribution_enumerate(
    model: *const MpscapModel,
    n: usize,
    prune_tol: f64,
    out: *mut *mut MpscapDistribution,
) -> MpscapStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let d = lib(enumerate_distribution(&(*model).inner, n, prune_tol))?;
        *out = Box::into_raw(Box::new(MpscapDistribution { inner: d }));
        Ok(())
    })
}

/// Releases a distribution handle.
///
/// # Safety
/// `dist` must be NULL or a handle from [`mpscap_distribution_enumerate`]
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mpscap_distribution_free(dist: *mut MpscapDistribution) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// Number of stored strings; 0 for a NULL handle.
///
/// # Safety
/// `dist` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpscap_distribution_len(dist: *const MpscapDistribution) -> usize {
    dist.as_ref().map_or(0, |d| d.inner.len())
}

/// String length `n`; 0 for a NULL handle.
///
/// # Safety
/// `dist` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpscap_distribution_n(dist: *const MpscapDistribution) -> usize {
    dist.as_ref().map_or(0, |d| d.inner.n)
}

/// Copies entry `index` (strings are in lexicographic order): its symbols
/// into `symbols` (capacity `cap`, needs at least `n`) and its probability
/// into `prob`.
///
/// # Safety
/// `dist` must be NULL or a live handle; `symbols` must be NULL or point to
/// `cap` writable bytes; `prob` must be NULL or valid for a write of one
/// `double`.
#[no_mangle]
pub unsafe extern "C" fn mpscap_distribution_get(
    dist: *const MpscapDistribution,
    index: usize,
    symbols: *mut u8,
    cap: usize,
    prob: *mut f64,
) -> MpscapStatus {
    guard(|| {
        non_null(dist, "dist")?;
        non_null(symbols, "symbols")?;
        non_null(prob, "prob")?;
        let d = &(*dist).inner;
        let item = d.items.get(index).ok_or_else(|| {
            fail(
                MpscapStatus::IndexOutOfRange,
                format!("index {index} out of range for {} entries", d.len()),
            )
        })?;
        let s = item.string.symbols();
        if cap < s.len() {
            return Err(fail(
                MpscapStatus::BufferTooSmall,
                format!("symbol buffer holds {cap} bytes, need {}", s.len()),
            ));
        }
        ptr::copy_nonoverlapping(s.as_ptr(), symbols, s.len());
        *prob = item.probability;
        Ok(())
    })
}

/// Shannon entropy (bits), total stored probability and pruned mass.
///
/// # Safety
/// `dist` must be NULL or a live handle; each out-pointer must be NULL (to
/// skip it) or valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn mpscap_distribution_summary(
    dist: *const MpscapDistribution,
    entropy: *mut f64,
    total: *mut f64,
    pruned_mass: *mut f64,
) -> MpscapStatus {
    guard(|| {
        non_null(dist, "dist")?;
        let d = &(*dist).inner;
        if let Some(e) = entropy.as_mut() {
            *e = shannon_entropy(d);
        }
        if let Some(t) = total.as_mut() {
            *t = d.total();
        }
        if let Some(p) = pruned_mass.as_mut() {
            *p = d.pruned_mass;
        }
        Ok(())
    })
}

/// Capacity estimates at block length `n`. For `n <= 4` the channel is built
/// and its entropy path compared with the distribution path.
///
/// # Safety
/// `model` must be NULL or a live handle; `out` must be NULL or valid for a
/// write of one [`MpscapCapacity`].
#[no_mangle]
pub unsafe extern "C" fn mpscap_capacity_estimate(
    model: *const MpscapModel,
    n: usize,
    prune_tol: f64,
    out: *mut MpscapCapacity,
) -> MpscapStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let e = lib(capacity_estimate_with(&(*model).inner, n, prune_tol))?;
        *out = MpscapCapacity {
            n: e.n,
            closed_form: e.closed_form.unwrap_or(f64::NAN),
            estimate_avg: e.estimate_avg,
            estimate_cond: e.estimate_cond,
            pruned_mass: e.pruned_mass,
            channel_path_difference: e.channel.as_ref().map_or(f64::NAN, |c| c.path_difference()),
        };
        Ok(())
    })
}
