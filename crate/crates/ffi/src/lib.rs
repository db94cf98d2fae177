//! C interface to the armada pipeline.
//!
//! Objects cross the boundary as opaque handles created by `*_new` /
//! `*_from_*` functions and released by the matching `*_free`. Every
//! fallible call returns an [`ArmadaStatus`]; on failure the message is
//! available from [`armada_last_error`] on the same thread.

use armada::armada::{rank, run_pipeline, select, ArmadaConfig as Config, ScoreVector};
use armada::data::{load_csv, CsvOptions, Dataset, Response, ResponseKind};
use armada::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmadaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    ComputationError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmadaResponseKind {
    Binary = 0,
    Continuous = 1,
}

impl From<ArmadaResponseKind> for ResponseKind {
    fn from(k: ArmadaResponseKind) -> Self {
        match k {
            ArmadaResponseKind::Binary => ResponseKind::Binary,
            ArmadaResponseKind::Continuous => ResponseKind::Continuous,
        }
    }
}

/// Loaded dataset.
pub struct ArmadaDataset(Dataset);

/// Pipeline configuration.
pub struct ArmadaConfig(Config);

/// Scores of one pipeline run.
pub struct ArmadaScores(ScoreVector);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ArmadaStatus {
    match e.root() {
        Error::InvalidArgument(_) => ArmadaStatus::InvalidArgument,
        Error::NonConvergence { .. } => ArmadaStatus::ComputationError,
        _ => ArmadaStatus::DataError,
    }
}

/// Runs `f`, recording errors and turning panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (ArmadaStatus, String)>) -> ArmadaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ArmadaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ArmadaStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (ArmadaStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ArmadaStatus, String) {
    (ArmadaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ArmadaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (ArmadaStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn armada_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn armada_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a dataset from a row-major `n × p` matrix and `n` responses.
/// Covariates are named `X1..Xp`.
///
/// # Safety
/// `values` must point to `n * p` doubles, `response` to `n` doubles and
/// `out` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn armada_dataset_new(
    values: *const f64,
    n: usize,
    p: usize,
    response: *const f64,
    kind: ArmadaResponseKind,
    out: *mut *mut ArmadaDataset,
) -> ArmadaStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        if response.is_null() {
            return Err(null("response"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(p).ok_or((ArmadaStatus::InvalidArgument, "n * p overflows".to_string()))?;
        let vals = std::slice::from_raw_parts(values, len);
        let y = std::slice::from_raw_parts(response, n).to_vec();
        let matrix = nalgebra::DMatrix::from_row_slice(n, p, vals);
        let resp = Response::new("y", kind.into(), y).map_err(lib_err)?;
        let names = (1..=p).map(|j| format!("X{j}")).collect();
        let ids = (1..=n).map(|i| format!("s{i}")).collect();
        let d = Dataset::new(matrix, names, resp, ids).map_err(lib_err)?;
        put(out, ArmadaDataset(d));
        Ok(())
    })
}

/// Loads a CSV/TSV file whose first column holds sample ids.
///
/// # Safety
/// `path` and `response_column` must be NUL-terminated strings; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn armada_dataset_from_csv(
    path: *const c_char,
    response_column: *const c_char,
    kind: ArmadaResponseKind,
    out: *mut *mut ArmadaDataset,
) -> ArmadaStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let col = c_str(response_column, "response_column")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = load_csv(path.as_ref(), col, kind.into(), CsvOptions::default()).map_err(lib_err)?;
        put(out, ArmadaDataset(d));
        Ok(())
    })
}

/// # Safety
/// `d` must be a live dataset handle; `n` and `p` writable or null.
#[no_mangle]
pub unsafe extern "C" fn armada_dataset_dims(d: *const ArmadaDataset, n: *mut usize, p: *mut usize) -> ArmadaStatus {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("dataset"))?;
        if !n.is_null() {
            *n = d.0.n();
        }
        if !p.is_null() {
            *p = d.0.p();
        }
        Ok(())
    })
}

/// # Safety
/// `d` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn armada_dataset_free(d: *mut ArmadaDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Default configuration with the given seed and cluster count (0 chooses
/// the count by bootstrap stability).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn armada_config_new(seed: u64, clusters: usize, out: *mut *mut ArmadaConfig) -> ArmadaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = Config { seed, clusters: (clusters > 0).then_some(clusters), ..Config::default() };
        put(out, ArmadaConfig(cfg));
        Ok(())
    })
}

/// Parses a JSON configuration (same schema as the command line's `--config`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn armada_config_from_json(json: *const c_char, out: *mut *mut ArmadaConfig) -> ArmadaStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = Config::from_json(text).map_err(lib_err)?;
        put(out, ArmadaConfig(cfg));
        Ok(())
    })
}

/// # Safety
/// `c` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn armada_config_free(c: *mut ArmadaConfig) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Runs the full pipeline. A null `config` uses the defaults.
///
/// # Safety
/// `d` must be a live dataset, `config` a live config or null, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn armada_select(
    d: *const ArmadaDataset,
    config: *const ArmadaConfig,
    out: *mut *mut ArmadaScores,
) -> ArmadaStatus {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("dataset"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let default = Config::default();
        let cfg = config.as_ref().map_or(&default, |c| &c.0);
        let res = run_pipeline(&d.0, cfg).map_err(lib_err)?;
        put(out, ArmadaScores(res.scores));
        Ok(())
    })
}

/// Number of covariates scored.
///
/// # Safety
/// `s` must be a live scores handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn armada_scores_len(s: *const ArmadaScores) -> usize {
    s.as_ref().map_or(0, |s| s.0.scores.len())
}

/// Number of methods in the bank, the maximum possible score.
///
/// # Safety
/// `s` must be a live scores handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn armada_scores_methods(s: *const ArmadaScores) -> usize {
    s.as_ref().map_or(0, |s| s.0.l())
}

unsafe fn fill<T: Copy>(src: &[T], buf: *mut T, cap: usize) -> Result<(), (ArmadaStatus, String)> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if cap < src.len() {
        return Err((ArmadaStatus::BufferTooSmall, format!("buffer holds {cap}, need {}", src.len())));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copies the per-covariate scores into `buf` (capacity `cap`).
///
/// # Safety
/// `s` must be a live scores handle; `buf` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn armada_scores_get(s: *const ArmadaScores, buf: *mut u32, cap: usize) -> ArmadaStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("scores"))?;
        let v: Vec<u32> = s.0.scores.iter().map(|&x| x as u32).collect();
        fill(&v, buf, cap)
    })
}

/// Writes the 0-based covariate indices in rank order (score descending,
/// then raw p-value ascending, then index).
///
/// # Safety
/// `s` must be a live scores handle; `buf` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn armada_scores_rank(s: *const ArmadaScores, buf: *mut usize, cap: usize) -> ArmadaStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("scores"))?;
        fill(&rank(&s.0), buf, cap)
    })
}

/// Writes the 0-based indices with score at least `threshold` into `buf`
/// and their number into `count`. With a null `buf` only `count` is set.
///
/// # Safety
/// `s` must be a live scores handle; `count` writable; `buf` null or
/// holding `cap` values.
#[no_mangle]
pub unsafe extern "C" fn armada_scores_select(
    s: *const ArmadaScores,
    threshold: usize,
    buf: *mut usize,
    cap: usize,
    count: *mut usize,
) -> ArmadaStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("scores"))?;
        if count.is_null() {
            return Err(null("count"));
        }
        let sel = select(&s.0, threshold);
        *count = sel.len();
        if buf.is_null() {
            return Ok(());
        }
        fill(&sel, buf, cap)
    })
}

/// Score table as TSV. Release with [`armada_string_free`].
///
/// # Safety
/// `s` must be a live scores handle or null (returns null).
#[no_mangle]
pub unsafe extern "C" fn armada_scores_to_tsv(s: *const ArmadaScores) -> *mut c_char {
    match s.as_ref() {
        Some(s) => CString::new(s.0.to_tsv()).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn armada_scores_free(s: *mut ArmadaScores) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a string returned by this library. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn armada_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
