//! C ABI over the trained recommender.
//!
//! Every function returns a [`SmorlStatus`]; on failure the message is
//! available from [`smorl_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use smorl_core::data::{load_dataset, padded_window, SessionDataset, SEQ_LEN};
use smorl_core::encoder::{top_k, EncoderModel};
use smorl_core::numerics::DenseMatrix;
use smorl_core::rewards::{diversity_reward, DiversityEmbedding};
use smorl_core::SmorlError;

/// Result codes. Values 2 to 6 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmorlStatus {
    Ok = 0,
    NullArgument = 1,
    Config = 2,
    Io = 3,
    Training = 4,
    UndefinedMetric = 5,
    OutOfRange = 6,
    InvalidUtf8 = 7,
    Panic = 8,
}

/// A trained encoder with its supervised head.
pub struct SmorlModel {
    inner: EncoderModel,
}

/// A preprocessed session dataset.
pub struct SmorlDataset {
    inner: SessionDataset,
}

/// A frozen item embedding used for the diversity reward.
pub struct SmorlEmbedding {
    inner: DiversityEmbedding,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(v) => v,
    Err(_) => panic!("version string"),
};

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &SmorlError) -> SmorlStatus {
    match e.exit_code() {
        2 => SmorlStatus::Config,
        3 => SmorlStatus::Io,
        4 => SmorlStatus::Training,
        5 => SmorlStatus::UndefinedMetric,
        _ => SmorlStatus::OutOfRange,
    }
}

struct Failure(SmorlStatus, String);

impl From<SmorlError> for Failure {
    fn from(e: SmorlError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SmorlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SmorlStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SmorlStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SmorlStatus::NullArgument, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(SmorlStatus::InvalidUtf8, "path is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn smorl_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn smorl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads an encoder checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smorl_model_load(path: *const c_char, out: *mut *mut SmorlModel) -> SmorlStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = EncoderModel::load(path)?;
        *out = Box::into_raw(Box::new(SmorlModel { inner: model }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`smorl_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn smorl_model_free(model: *mut SmorlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of recommendable items `n`; item indices run from 1 to `n`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smorl_model_n_items(model: *const SmorlModel, out: *mut usize) -> SmorlStatus {
    guard(|| write_out(out, handle(model, "model")?.inner.n_items(), "out"))
}

/// Length of the state vector produced by [`smorl_model_encode`].
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smorl_model_state_size(model: *const SmorlModel, out: *mut usize) -> SmorlStatus {
    guard(|| write_out(out, handle(model, "model")?.inner.shape().hidden_size, "out"))
}

fn window(items: &[usize]) -> Vec<usize> {
    padded_window(items, SEQ_LEN)
}

/// Encodes the clicked items of a session (oldest first; only the last 10
/// are used) into `state`, which must hold exactly the state size.
///
/// # Safety
/// `items` must point to `n_items` values and `state` to `state_len` values.
#[no_mangle]
pub unsafe extern "C" fn smorl_model_encode(
    model: *const SmorlModel,
    items: *const usize,
    n_items: usize,
    state: *mut f64,
    state_len: usize,
) -> SmorlStatus {
    guard(|| {
        let model = &handle(model, "model")?.inner;
        let items = slice_arg(items, n_items, "items")?;
        let out = slice_out(state, state_len, "state")?;
        let s = model.encode(&window(items))?;
        if s.len() != out.len() {
            return Err(Failure(
                SmorlStatus::OutOfRange,
                format!("state buffer holds {} values, state has {}", out.len(), s.len()),
            ));
        }
        out.copy_from_slice(&s);
        Ok(())
    })
}

/// Writes the `k` best next items for a session, best first, with their
/// scores. `scores` may be NULL.
///
/// # Safety
/// `items` must point to `n_items` values, `out_items` to `k` values and
/// `scores`, when not NULL, to `k` values.
#[no_mangle]
pub unsafe extern "C" fn smorl_model_recommend(
    model: *const SmorlModel,
    items: *const usize,
    n_items: usize,
    k: usize,
    out_items: *mut usize,
    scores: *mut f64,
) -> SmorlStatus {
    guard(|| {
        let model = &handle(model, "model")?.inner;
        let items = slice_arg(items, n_items, "items")?;
        let out = slice_out(out_items, k, "out_items")?;
        let state = model.encode_batch(&[&window(items)])?;
        let logits = model.decode_logits(&state)?;
        let ranked = top_k(logits.row(0), k)?;
        out.copy_from_slice(&ranked.items);
        if !scores.is_null() {
            std::slice::from_raw_parts_mut(scores, k).copy_from_slice(&ranked.scores);
        }
        Ok(())
    })
}

/// Loads a dataset written by the `prepare` command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smorl_dataset_load(path: *const c_char, out: *mut *mut SmorlDataset) -> SmorlStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = load_dataset(path)?;
        *out = Box::into_raw(Box::new(SmorlDataset { inner: ds }));
        Ok(())
    })
}

/// Releases a dataset. NULL is ignored.
///
/// # Safety
/// `dataset` must come from [`smorl_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn smorl_dataset_free(dataset: *mut SmorlDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Session and item counts.
///
/// # Safety
/// `dataset` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn smorl_dataset_counts(
    dataset: *const SmorlDataset,
    n_sessions: *mut usize,
    n_items: *mut usize,
) -> SmorlStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.inner;
        write_out(n_sessions, ds.n_sessions(), "n_sessions")?;
        write_out(n_items, ds.n_items(), "n_items")
    })
}

/// Copies session `index` into `items`. `len` receives the session length;
/// call with `capacity` 0 to query it.
///
/// # Safety
/// `items` must point to `capacity` values and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn smorl_dataset_session(
    dataset: *const SmorlDataset,
    index: usize,
    items: *mut usize,
    capacity: usize,
    len: *mut usize,
) -> SmorlStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.inner;
        let s = ds.sessions.get(index).ok_or_else(|| {
            Failure(
                SmorlStatus::OutOfRange,
                format!("session {index} out of range (limit {})", ds.n_sessions()),
            )
        })?;
        write_out(len, s.len(), "len")?;
        if capacity == 0 {
            return Ok(());
        }
        if capacity < s.len() {
            return Err(Failure(
                SmorlStatus::OutOfRange,
                format!("buffer holds {capacity} items, session has {}", s.len()),
            ));
        }
        slice_out(items, s.len(), "items")?.copy_from_slice(s);
        Ok(())
    })
}

/// Loads a diversity embedding written by `pretrain-embedding`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smorl_embedding_load(path: *const c_char, out: *mut *mut SmorlEmbedding) -> SmorlStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let emb = DiversityEmbedding::load(path)?;
        *out = Box::into_raw(Box::new(SmorlEmbedding { inner: emb }));
        Ok(())
    })
}

/// Builds an embedding from a row-major `(n_items + 1) × dim` table whose
/// row 0 is the padding item.
///
/// # Safety
/// `values` must point to `(n_items + 1) * dim` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn smorl_embedding_from_table(
    values: *const f64,
    n_items: usize,
    dim: usize,
    out: *mut *mut SmorlEmbedding,
) -> SmorlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = (n_items + 1)
            .checked_mul(dim)
            .ok_or_else(|| Failure(SmorlStatus::OutOfRange, "table size overflows".into()))?;
        let v = slice_arg(values, len, "values")?.to_vec();
        let table = DenseMatrix::from_vec(n_items + 1, dim, v)?;
        *out = Box::into_raw(Box::new(SmorlEmbedding {
            inner: DiversityEmbedding::new(table),
        }));
        Ok(())
    })
}

/// Releases an embedding. NULL is ignored.
///
/// # Safety
/// `emb` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn smorl_embedding_free(emb: *mut SmorlEmbedding) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Diversity reward `1 - cos` between the last clicked and predicted items.
///
/// # Safety
/// `emb` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smorl_diversity_reward(
    emb: *const SmorlEmbedding,
    last_item: usize,
    predicted: usize,
    out: *mut f64,
) -> SmorlStatus {
    guard(|| {
        let emb = &handle(emb, "embedding")?.inner;
        write_out(out, diversity_reward(last_item, predicted, emb)?, "out")
    })
}
