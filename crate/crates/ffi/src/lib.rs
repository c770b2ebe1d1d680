//! C ABI over the `elsi-rec` recommender.
//!
//! Every fallible function returns an [`ElsiStatus`]; on failure a
//! description is available from [`elsi_last_error_message`] on the same
//! thread. Handles are opaque and must be released with
//! [`elsi_recommender_free`]. A handle is immutable after opening, so it may
//! be shared across threads for concurrent queries.
//!
//! The generated header lives at `include/elsi_rec.h`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use elsi_rec::classifier::{self, ClassifierError, ClassifierHead};
use elsi_rec::recommend::{self, RecommendError, TopicIndex};

/// Result codes shared by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElsiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    NoCandidates = 6,
    BufferTooSmall = 7,
    Inconsistent = 8,
    Panic = 99,
}

/// Opaque handle holding a classifier head and a topic index.
pub struct ElsiRecommender {
    head: ClassifierHead,
    index: TopicIndex,
    ids: HashMap<String, CString>,
}

/// One ranked result. `id` is owned by the recommender handle and stays
/// valid until the handle is freed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ElsiMatch {
    pub id: *const c_char,
    pub distance: f64,
    pub rank: u32,
}

/// Summary of one recommendation call.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ElsiOutcome {
    pub topic: u32,
    pub topic_probability: f64,
    /// Number of entries written to the results buffer.
    pub count: usize,
    /// Non-zero when the predicted topic was empty and the whole index was searched.
    pub out_of_topic: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

struct Failure(ElsiStatus, String);

impl Failure {
    fn new(status: ElsiStatus, message: impl Into<String>) -> Self {
        Failure(status, message.into())
    }
}

impl From<ClassifierError> for Failure {
    fn from(e: ClassifierError) -> Self {
        let status = match &e {
            ClassifierError::Io { .. } => ElsiStatus::Io,
            ClassifierError::Format { .. } | ClassifierError::Version { .. } => ElsiStatus::Format,
            ClassifierError::DimensionMismatch { .. } => ElsiStatus::DimensionMismatch,
            _ => ElsiStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<RecommendError> for Failure {
    fn from(e: RecommendError) -> Self {
        let status = match &e {
            RecommendError::Io { .. } => ElsiStatus::Io,
            RecommendError::Format { .. } | RecommendError::Version { .. } => ElsiStatus::Format,
            RecommendError::DimensionMismatch { .. } => ElsiStatus::DimensionMismatch,
            RecommendError::NoCandidates { .. } => ElsiStatus::NoCandidates,
            RecommendError::Consistency(_) => ElsiStatus::Inconsistent,
            RecommendError::Classifier(ClassifierError::DimensionMismatch { .. }) => ElsiStatus::DimensionMismatch,
            _ => ElsiStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ElsiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ElsiStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ElsiStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::new(ElsiStatus::NullPointer, format!("{name} is null")));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(ElsiStatus::InvalidArgument, format!("{name} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        if len == 0 {
            return Ok(&[]);
        }
        return Err(Failure::new(ElsiStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn null_check<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(ElsiStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Opens a classifier head (`HEAD` file) and topic index (`TIDX` file).
///
/// # Safety
/// `head_path` and `index_path` must be NUL-terminated strings; `out` must
/// point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn elsi_recommender_open(
    head_path: *const c_char,
    index_path: *const c_char,
    out: *mut *mut ElsiRecommender,
) -> ElsiStatus {
    guard(|| {
        null_check(out, "out")?;
        *out = ptr::null_mut();
        let head = classifier::read_head(&path_arg(head_path, "head_path")?)?;
        let index = recommend::read_index(&path_arg(index_path, "index_path")?)?;
        if head.topics() != index.topics() || head.dim() != index.dim() {
            return Err(Failure::new(
                ElsiStatus::Inconsistent,
                format!(
                    "head is K={}, D={} but index is K={}, D={}",
                    head.topics(),
                    head.dim(),
                    index.topics(),
                    index.dim()
                ),
            ));
        }
        let mut ids = HashMap::with_capacity(index.total_articles());
        for partition in index.partitions() {
            for id in partition.ids() {
                let c = CString::new(id.as_str())
                    .map_err(|_| Failure::new(ElsiStatus::Format, format!("article id `{id}` contains NUL")))?;
                ids.insert(id.clone(), c);
            }
        }
        *out = Box::into_raw(Box::new(ElsiRecommender { head, index, ids }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `handle` must come from [`elsi_recommender_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn elsi_recommender_free(handle: *mut ElsiRecommender) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Embedding dimension D, or 0 for a null handle.
///
/// # Safety
/// `handle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn elsi_recommender_dim(handle: *const ElsiRecommender) -> usize {
    handle.as_ref().map_or(0, |h| h.index.dim())
}

/// Number of topics K, or 0 for a null handle.
///
/// # Safety
/// `handle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn elsi_recommender_topics(handle: *const ElsiRecommender) -> usize {
    handle.as_ref().map_or(0, |h| h.index.topics())
}

/// Number of ELSI articles indexed under `topic` (0 when out of range).
///
/// # Safety
/// `handle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn elsi_recommender_partition_size(handle: *const ElsiRecommender, topic: usize) -> usize {
    handle
        .as_ref()
        .and_then(|h| h.index.partition(topic))
        .map_or(0, |p| p.len())
}

/// Predicts the topic of `query` and writes up to `k` nearest ELSI articles
/// of that topic into `results` (L1 distance, ties by id).
///
/// `capacity` must be at least `k`. With `fallback_global` non-zero an empty
/// topic falls back to searching every topic and sets `out_of_topic`;
/// otherwise it yields `NoCandidates` with `outcome` still describing the
/// predicted topic.
///
/// # Safety
/// `query` must point to `dim` doubles, `results` to `capacity` writable
/// entries and `outcome` to one writable [`ElsiOutcome`].
#[no_mangle]
pub unsafe extern "C" fn elsi_recommend(
    handle: *const ElsiRecommender,
    query: *const f64,
    dim: usize,
    k: usize,
    fallback_global: u8,
    results: *mut ElsiMatch,
    capacity: usize,
    outcome: *mut ElsiOutcome,
) -> ElsiStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Failure::new(ElsiStatus::NullPointer, "handle is null"))?;
        null_check(outcome, "outcome")?;
        *outcome = ElsiOutcome::default();
        let query = slice_arg(query, dim, "query")?;
        if k == 0 {
            return Err(Failure::new(ElsiStatus::InvalidArgument, "k must be at least 1"));
        }
        if capacity < k {
            return Err(Failure::new(
                ElsiStatus::BufferTooSmall,
                format!("results capacity {capacity} is smaller than k={k}"),
            ));
        }
        null_check(results, "results")?;
        if let Some(col) = query.iter().position(|v| !v.is_finite()) {
            return Err(Failure::new(
                ElsiStatus::InvalidArgument,
                format!("query has a non-finite value at column {col}"),
            ));
        }
        let found = match recommend::recommend_for_abstract(query, &h.head, &h.index, k, fallback_global != 0) {
            Ok(found) => found,
            Err(RecommendError::NoCandidates { topic, probability }) => {
                (*outcome).topic = topic as u32;
                (*outcome).topic_probability = probability.unwrap_or(f64::NAN);
                return Err(RecommendError::NoCandidates { topic, probability }.into());
            }
            Err(e) => return Err(e.into()),
        };
        for (i, r) in found.results.iter().enumerate() {
            *results.add(i) = ElsiMatch {
                id: h.ids[&r.article_id].as_ptr(),
                distance: r.distance,
                rank: r.rank as u32,
            };
        }
        *outcome = ElsiOutcome {
            topic: found.topic as u32,
            topic_probability: found.topic_probability,
            count: found.results.len(),
            out_of_topic: u8::from(found.out_of_topic),
        };
        Ok(())
    })
}

/// Writes the predicted topic and, when `probabilities` is non-null, the K
/// softmax probabilities (`capacity` must then be at least K).
///
/// # Safety
/// `query` must point to `dim` doubles, `topic` to one writable u32 and
/// `probabilities` (if non-null) to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn elsi_predict_topic(
    handle: *const ElsiRecommender,
    query: *const f64,
    dim: usize,
    topic: *mut u32,
    probabilities: *mut f64,
    capacity: usize,
) -> ElsiStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Failure::new(ElsiStatus::NullPointer, "handle is null"))?;
        null_check(topic, "topic")?;
        let query = slice_arg(query, dim, "query")?;
        let prediction = classifier::predict_topic(query, &h.head)?;
        if !probabilities.is_null() {
            if capacity < prediction.probabilities.len() {
                return Err(Failure::new(
                    ElsiStatus::BufferTooSmall,
                    format!("probabilities capacity {capacity} is smaller than K={}", h.head.topics()),
                ));
            }
            ptr::copy_nonoverlapping(prediction.probabilities.as_ptr(), probabilities, prediction.probabilities.len());
        }
        *topic = prediction.topic as u32;
        Ok(())
    })
}

/// Manhattan distance between two `dim`-long vectors.
///
/// # Safety
/// `a` and `b` must each point to `dim` doubles; `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn elsi_l1_distance(a: *const f64, b: *const f64, dim: usize, out: *mut f64) -> ElsiStatus {
    guard(|| {
        null_check(out, "out")?;
        let a = slice_arg(a, dim, "a")?;
        let b = slice_arg(b, dim, "b")?;
        *out = recommend::l1_distance(a, b)?;
        Ok(())
    })
}

/// Accuracy and macro-F1 (over all `topics` classes, 0/0 counted as 0) of
/// `n` predictions.
///
/// # Safety
/// `y_true` and `y_pred` must each point to `n` u32 labels; `accuracy` and
/// `macro_f1` to one writable double each.
#[no_mangle]
pub unsafe extern "C" fn elsi_evaluate(
    y_true: *const u32,
    y_pred: *const u32,
    n: usize,
    topics: u32,
    accuracy: *mut f64,
    macro_f1: *mut f64,
) -> ElsiStatus {
    guard(|| {
        null_check(accuracy, "accuracy")?;
        null_check(macro_f1, "macro_f1")?;
        let t: Vec<usize> = slice_arg(y_true, n, "y_true")?.iter().map(|&v| v as usize).collect();
        let p: Vec<usize> = slice_arg(y_pred, n, "y_pred")?.iter().map(|&v| v as usize).collect();
        let report = classifier::evaluate(&t, &p, topics as usize)?;
        *accuracy = report.accuracy;
        *macro_f1 = report.macro_f1;
        Ok(())
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer is valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn elsi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn elsi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
