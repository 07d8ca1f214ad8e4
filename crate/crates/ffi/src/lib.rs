//! C interface to `grsvnet-core`.
//!
//! Every fallible function returns a [`GrsvStatus`]; on failure a message
//! describing the error is available from [`grsv_last_error`] on the same
//! thread. Objects are opaque handles created by `*_new`/`*_fit`/`*_run`
//! style functions and released with the matching `*_free`. Matrices are
//! passed row-major; class labels are 1-based.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use grsvnet::classifier::{self, SubspaceSet};
use grsvnet::harness::{self, RunOutcome, TrainConfig};
use grsvnet::linalg::{self, Matrix};
use grsvnet::loss;
use grsvnet::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrsvStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or inconsistent with another.
    InvalidArgument = 2,
    /// Matrix or vector shapes do not agree.
    Dimension = 3,
    /// A factorization failed or a value became non-finite.
    Numerical = 4,
    /// A configuration could not be parsed or validated.
    Config = 5,
    /// Reading or writing a file failed.
    Io = 6,
    /// Training stopped at a failing batch.
    Training = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// Dense row-major matrix.
pub struct GrsvMatrix(Matrix);

/// One orthonormal basis per class.
pub struct GrsvSubspaceSet(SubspaceSet);

/// Validated experiment configuration.
pub struct GrsvConfig(TrainConfig);

/// Trained network with its metrics series.
pub struct GrsvRun(RunOutcome);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let clean = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn status_of(err: &Error) -> GrsvStatus {
    match err {
        Error::Dimension { .. } => GrsvStatus::Dimension,
        Error::NonFinite(_) | Error::Numerical(_) => GrsvStatus::Numerical,
        Error::Config(_) | Error::Parse { .. } => GrsvStatus::Config,
        Error::Split(_) => GrsvStatus::InvalidArgument,
        Error::Training { .. } => GrsvStatus::Training,
        Error::Io { .. } => GrsvStatus::Io,
    }
}

/// Boundary failure carrying its own status.
struct Failure(GrsvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GrsvStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(GrsvStatus::InvalidArgument, msg.into())
}

/// Runs `body`, converting errors and panics into a status plus message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> GrsvStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            GrsvStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("panic: {msg}"));
            GrsvStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or valid for reads of `len` elements.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` is null or valid for writes of `len` elements.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` is null or points to a live value of type `T`.
unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `out` is null or valid for a pointer write.
unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// # Safety
/// `s` is null or a NUL-terminated string.
unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

/// Message of the most recent failed call on this thread; empty after a
/// successful call. The pointer stays valid until the next call into this
/// library on the same thread.
#[no_mangle]
pub extern "C" fn grsv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies a `rows × cols` row-major array into a new matrix.
///
/// # Safety
/// `data` must be valid for `rows * cols` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn grsv_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut GrsvMatrix,
) -> GrsvStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| invalid("rows * cols overflows"))?;
        let values = slice(data, len, "data")?.to_vec();
        emit(out, GrsvMatrix(Matrix::from_vec(rows, cols, values)?))
    })
}

/// # Safety
/// `m` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grsv_matrix_free(m: *mut GrsvMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Rows of `m`, or 0 for a null handle.
///
/// # Safety
/// `m` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grsv_matrix_rows(m: *const GrsvMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// Columns of `m`, or 0 for a null handle.
///
/// # Safety
/// `m` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grsv_matrix_cols(m: *const GrsvMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the entries, row-major, into `out`, which must hold exactly
/// `rows * cols` values.
///
/// # Safety
/// `m` is a live handle and `out` is valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn grsv_matrix_copy(
    m: *const GrsvMatrix,
    out: *mut f64,
    len: usize,
) -> GrsvStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let src = m.0.as_slice();
        if len != src.len() {
            return Err(Failure(
                GrsvStatus::Dimension,
                format!("buffer holds {len} values, matrix has {}", src.len()),
            ));
        }
        slice_mut(out, len, "out")?.copy_from_slice(src);
        Ok(())
    })
}

/// Sum of the singular values of `m`.
///
/// # Safety
/// `m` is a live handle and `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn grsv_nuclear_norm(m: *const GrsvMatrix, out: *mut f64) -> GrsvStatus {
    guard(|| {
        let value = linalg::nuclear_norm(&deref(m, "matrix")?.0)?;
        *out.as_mut().ok_or_else(|| null("out"))? = value;
        Ok(())
    })
}

/// Canonical subgradient `U₁V₁ᵀ` of the nuclear norm, keeping singular
/// values above `trunc · max(1, σ₁)`.
///
/// # Safety
/// `m` is a live handle and `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn grsv_nuclear_norm_subgradient(
    m: *const GrsvMatrix,
    trunc: f64,
    out: *mut *mut GrsvMatrix,
) -> GrsvStatus {
    guard(|| {
        if !(trunc > 0.0) {
            return Err(invalid(format!("trunc must be positive, got {trunc}")));
        }
        let g = linalg::nuclear_norm_subgradient(&deref(m, "matrix")?.0, trunc)?;
        emit(out, GrsvMatrix(g))
    })
}

/// OLE loss of the columns of `z` labeled by `labels` (one per column).
/// When `grad` is non-null it receives a new matrix holding the
/// subgradient with respect to `z`.
///
/// # Safety
/// `z` is a live handle, `labels` is valid for `n` reads, `value` for one
/// write and `grad` is null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn grsv_ole_loss(
    z: *const GrsvMatrix,
    labels: *const usize,
    n: usize,
    trunc: f64,
    value: *mut f64,
    grad: *mut *mut GrsvMatrix,
) -> GrsvStatus {
    guard(|| {
        if !(trunc > 0.0) {
            return Err(invalid(format!("trunc must be positive, got {trunc}")));
        }
        let labels = slice(labels, n, "labels")?;
        let ole = loss::ole_loss(&deref(z, "z")?.0, labels, trunc)?;
        *value.as_mut().ok_or_else(|| null("value"))? = ole.value;
        if !grad.is_null() {
            emit(grad, GrsvMatrix(ole.grad))?;
        }
        Ok(())
    })
}

/// Fits one subspace per class `1..=classes` to the columns of
/// `features`, keeping directions with `σᵢ ≥ ratio · σ₁`.
///
/// # Safety
/// `features` is a live handle, `labels` is valid for `n` reads and `out`
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn grsv_subspace_fit(
    features: *const GrsvMatrix,
    labels: *const usize,
    n: usize,
    classes: usize,
    ratio: f64,
    out: *mut *mut GrsvSubspaceSet,
) -> GrsvStatus {
    guard(|| {
        let z = &deref(features, "features")?.0;
        let labels = slice(labels, n, "labels")?;
        if z.cols() != n {
            return Err(Failure(
                GrsvStatus::Dimension,
                format!("{n} labels for {} feature columns", z.cols()),
            ));
        }
        let mut members = vec![Vec::new(); classes];
        for (j, &y) in labels.iter().enumerate() {
            if y == 0 || y > classes {
                return Err(invalid(format!("label {y} outside 1..={classes}")));
            }
            members[y - 1].push(j);
        }
        let per_class: Vec<Matrix> = members.iter().map(|idx| z.select_columns(idx)).collect();
        emit(out, GrsvSubspaceSet(classifier::fit(&per_class, ratio)?))
    })
}

/// # Safety
/// `s` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grsv_subspace_free(s: *mut GrsvSubspaceSet) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `s` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grsv_subspace_classes(s: *const GrsvSubspaceSet) -> usize {
    s.as_ref().map_or(0, |s| s.0.classes())
}

/// Dimension of class `class_id`'s subspace.
///
/// # Safety
/// `s` is a live handle and `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn grsv_subspace_rank(
    s: *const GrsvSubspaceSet,
    class_id: usize,
    out: *mut usize,
) -> GrsvStatus {
    guard(|| {
        let s = &deref(s, "subspace set")?.0;
        if class_id == 0 || class_id > s.classes() {
            return Err(invalid(format!(
                "class id {class_id} outside 1..={}",
                s.classes()
            )));
        }
        *out.as_mut().ok_or_else(|| null("out"))? = s.bases[class_id - 1].rank();
        Ok(())
    })
}

/// Classifies one feature vector. `probs` may be null; otherwise it
/// receives one probability per class (`probs_len` must equal the class
/// count). `degenerate` (nullable) is set to 1 when every score was zero.
///
/// # Safety
/// `s` is a live handle, `z` valid for `len` reads, `label` for one write,
/// `probs` null or valid for `probs_len` writes, `degenerate` null or
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn grsv_subspace_predict(
    s: *const GrsvSubspaceSet,
    z: *const f64,
    len: usize,
    eps: f64,
    label: *mut usize,
    probs: *mut f64,
    probs_len: usize,
    degenerate: *mut c_int,
) -> GrsvStatus {
    guard(|| {
        let s = &deref(s, "subspace set")?.0;
        if !(eps > 0.0) {
            return Err(invalid(format!("eps must be positive, got {eps}")));
        }
        let p = classifier::predict(s, slice(z, len, "z")?, eps)?;
        *label.as_mut().ok_or_else(|| null("label"))? = p.label;
        if !probs.is_null() {
            if probs_len != p.distribution.probs.len() {
                return Err(Failure(
                    GrsvStatus::Dimension,
                    format!(
                        "probs holds {probs_len} values, there are {} classes",
                        p.distribution.probs.len()
                    ),
                ));
            }
            slice_mut(probs, probs_len, "probs")?.copy_from_slice(&p.distribution.probs);
        }
        if let Some(d) = degenerate.as_mut() {
            *d = c_int::from(p.distribution.degenerate);
        }
        Ok(())
    })
}

/// Parses and validates a TOML experiment configuration.
///
/// # Safety
/// `toml` is a NUL-terminated string and `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn grsv_config_from_toml(
    toml: *const c_char,
    out: *mut *mut GrsvConfig,
) -> GrsvStatus {
    guard(|| {
        let cfg = TrainConfig::from_toml_str(c_str(toml, "toml")?)?;
        emit(out, GrsvConfig(cfg))
    })
}

/// Overrides the epoch count.
///
/// # Safety
/// `cfg` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn grsv_config_set_epochs(cfg: *mut GrsvConfig, epochs: usize) -> GrsvStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        let mut next = cfg.0.clone();
        next.epochs = epochs;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grsv_config_free(cfg: *mut GrsvConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Generates the configured dataset and trains to completion.
///
/// # Safety
/// `cfg` is a live handle and `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn grsv_run_experiment(
    cfg: *const GrsvConfig,
    out: *mut *mut GrsvRun,
) -> GrsvStatus {
    guard(|| {
        let outcome = harness::run_experiment(&deref(cfg, "config")?.0)?;
        emit(out, GrsvRun(outcome))
    })
}

/// # Safety
/// `run` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grsv_run_free(run: *mut GrsvRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of recorded epochs, or 0 for a null handle.
///
/// # Safety
/// `run` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grsv_run_epochs(run: *const GrsvRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.metrics.len())
}

/// Final training and test accuracy; `test` is NaN when the task has no
/// held-out set.
///
/// # Safety
/// `run` is a live handle; `train` and `test` are valid for one write.
#[no_mangle]
pub unsafe extern "C" fn grsv_run_final_accuracy(
    run: *const GrsvRun,
    train: *mut f64,
    test: *mut f64,
) -> GrsvStatus {
    guard(|| {
        let last = deref(run, "run")?.0.final_metrics();
        *train.as_mut().ok_or_else(|| null("train"))? = last.train_accuracy;
        *test.as_mut().ok_or_else(|| null("test"))? = last.test_accuracy.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Writes the per-epoch metrics CSV.
///
/// # Safety
/// `run` is a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn grsv_run_write_metrics(
    run: *const GrsvRun,
    path: *const c_char,
) -> GrsvStatus {
    guard(|| {
        let run = deref(run, "run")?;
        harness::write_metrics(Path::new(c_str(path, "path")?), &run.0.metrics)?;
        Ok(())
    })
}

/// Subspace classifier of a finished ole_grsvnet run, as a new handle;
/// null (with status OK) for softmax modes.
///
/// # Safety
/// `run` is a live handle and `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn grsv_run_subspaces(
    run: *const GrsvRun,
    out: *mut *mut GrsvSubspaceSet,
) -> GrsvStatus {
    guard(|| {
        let run = deref(run, "run")?;
        if out.is_null() {
            return Err(null("out"));
        }
        match &run.0.subspaces {
            Some(set) => emit(out, GrsvSubspaceSet(set.clone())),
            None => {
                *out = ptr::null_mut();
                Ok(())
            }
        }
    })
}
