//! C ABI for the embedgeom evaluation engine.
//!
//! Every fallible function returns an [`EgStatus`]. On failure a message is
//! kept per thread and can be read with [`eg_last_error_message`]. Objects are
//! handed out as opaque pointers that the caller releases with the matching
//! `*_free` function. Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use embedgeom::baselines::permutation_baseline;
use embedgeom::distances::{pairwise_matrix, MetricKind};
use embedgeom::dtw::{dtw_distance, PreparedSequence};
use embedgeom::metrics::{self, MetricId};
use embedgeom::pca::{fit_transform, PcaOptions};
use embedgeom::perception::binomial_test;
use embedgeom::pooling::{pool, PoolingStrategy};
use embedgeom::tensor::{DistanceMatrix, EmbeddingSet, LabelSet, MatrixMetric, SequenceEmbedding};
use embedgeom::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// The input does not support the requested score (too few classes, etc.).
    Degenerate = 4,
    Io = 5,
    Format = 6,
    /// The caller's buffer is too small; the needed length was written.
    BufferTooSmall = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgMetricKind {
    Cosine = 0,
    Euclidean = 1,
    Spearman = 2,
}

/// Distance-based scores. `PrecisionAtK` reads its `k` from the call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgScore {
    PrecisionAtK = 0,
    Gsr = 1,
    Csr = 2,
    Cs = 3,
    Cscf = 4,
    Silhouette = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EgPermutationSummary {
    pub observed: f64,
    pub baseline_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub n_permutations: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EgDtwResult {
    pub distance: f64,
    pub cost: f64,
    pub path_len: usize,
    /// The band had to be widened to connect the corners.
    pub widened: bool,
}

/// `N x D` row-major vectors.
pub struct EgEmbeddingSet {
    inner: EmbeddingSet,
}

/// Square distance matrix stored as `f32`.
pub struct EgDistanceMatrix {
    inner: DistanceMatrix,
}

/// Per-item class labels; unlabeled items are allowed.
pub struct EgLabels {
    inner: LabelSet,
}

struct Failure {
    status: EgStatus,
    message: String,
}

impl Failure {
    fn new(status: EgStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Self::new(EgStatus::NullPointer, format!("`{what}` is NULL"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::ClipIo { .. } | Error::Io { .. } => EgStatus::Io,
            Error::Format { .. } | Error::EmptySequence { .. } | Error::Csv(_) | Error::Json(_) => EgStatus::Format,
            Error::DegenerateDataset(_) | Error::Degenerate(_) => EgStatus::Degenerate,
            Error::DimensionMismatch { .. } => EgStatus::DimensionMismatch,
            Error::Parameter(_) | Error::Config(_) => EgStatus::InvalidArgument,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> EgStatus {
    let failure = match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => return EgStatus::Ok,
        Ok(Err(f)) => f,
        Err(panic) => {
            let detail = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            Failure::new(EgStatus::Internal, format!("internal error: {detail}"))
        }
    };
    set_last_error(&failure.message);
    failure.status
}

unsafe fn borrow<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { ptr.as_ref() }.ok_or_else(|| Failure::null(what))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    unsafe { ptr.as_mut() }.ok_or_else(|| Failure::null(what))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

fn checked_len(a: usize, b: usize) -> Result<usize, Failure> {
    a.checked_mul(b)
        .ok_or_else(|| Failure::new(EgStatus::InvalidArgument, "size overflow"))
}

fn metric_id(score: EgScore, k: usize) -> MetricId {
    match score {
        EgScore::PrecisionAtK => MetricId::PAtK(k),
        EgScore::Gsr => MetricId::Gsr,
        EgScore::Csr => MetricId::Csr,
        EgScore::Cs => MetricId::Cs,
        EgScore::Cscf => MetricId::Cscf,
        EgScore::Silhouette => MetricId::Silhouette,
    }
}

fn metric_kind(kind: EgMetricKind) -> MetricKind {
    match kind {
        EgMetricKind::Cosine => MetricKind::Cosine,
        EgMetricKind::Euclidean => MetricKind::Euclidean,
        EgMetricKind::Spearman => MetricKind::Spearman,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on the calling thread, or NULL.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Copies `n * d` row-major values into a new embedding set.
///
/// # Safety
/// `data` must point to `n * d` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_embedding_set_new(
    data: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut EgEmbeddingSet,
) -> EgStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let values = unsafe { slice(data, checked_len(n, d)?, "data") }?;
        let ids = (0..n).map(|i| i.to_string()).collect();
        let inner = EmbeddingSet::new(ids, values.to_vec(), d)?;
        *out = Box::into_raw(Box::new(EgEmbeddingSet { inner }));
        Ok(())
    })
}

/// # Safety
/// `set` must be NULL or a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eg_embedding_set_free(set: *mut EgEmbeddingSet) {
    if !set.is_null() {
        drop(unsafe { Box::from_raw(set) });
    }
}

/// # Safety
/// `set` must be a live handle; `n` and `d` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_embedding_set_shape(set: *const EgEmbeddingSet, n: *mut usize, d: *mut usize) -> EgStatus {
    guard(|| {
        let set = unsafe { borrow(set, "set") }?;
        let (n, d) = unsafe { (out_ref(n, "n")?, out_ref(d, "d")?) };
        *n = set.inner.len();
        *d = set.inner.dim();
        Ok(())
    })
}

/// Copies the `n * d` values into `out`, which holds `capacity` doubles.
///
/// # Safety
/// `set` must be a live handle and `out` must hold `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn eg_embedding_set_copy_data(
    set: *const EgEmbeddingSet,
    out: *mut f64,
    capacity: usize,
) -> EgStatus {
    guard(|| {
        let data = unsafe { borrow(set, "set") }?.inner.data();
        copy_out(data, out, capacity)
    })
}

fn copy_out<T: Copy>(src: &[T], out: *mut T, capacity: usize) -> Result<(), Failure> {
    if capacity < src.len() {
        return Err(Failure::new(
            EgStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len()) };
    Ok(())
}

/// Pools one `t x d` sequence whose first `valid_len` frames are real.
///
/// `strategy` is a pooling name such as `mean_time_incl_pad+mean_feat`. The
/// pooled length is written to `written`; if it exceeds `capacity` the call
/// returns `BufferTooSmall` and leaves `out` untouched.
///
/// # Safety
/// `frames` must hold `t * d` floats, `strategy` must be a NUL-terminated
/// string, `out` must hold `capacity` doubles and `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_pool_sequence(
    frames: *const f32,
    t: usize,
    d: usize,
    valid_len: usize,
    strategy: *const c_char,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> EgStatus {
    guard(|| {
        let written = unsafe { out_ref(written, "written") }?;
        let frames = unsafe { slice(frames, checked_len(t, d)?, "frames") }?;
        if strategy.is_null() {
            return Err(Failure::null("strategy"));
        }
        let name = unsafe { CStr::from_ptr(strategy) }
            .to_str()
            .map_err(|_| Failure::new(EgStatus::InvalidArgument, "strategy is not UTF-8"))?;
        let strategy: PoolingStrategy = name.parse()?;
        let seq = SequenceEmbedding::new("sequence", frames.to_vec(), t, d, valid_len)?;
        let pooled = pool(&seq, strategy)?;
        *written = pooled.len();
        copy_out(&pooled, out, capacity)
    })
}

/// Fits PCA on `set` and returns the projected rows as a new set.
///
/// # Safety
/// `set` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_pca_fit_transform(
    set: *const EgEmbeddingSet,
    target_dims: usize,
    whiten: bool,
    out: *mut *mut EgEmbeddingSet,
) -> EgStatus {
    guard(|| {
        let set = unsafe { borrow(set, "set") }?;
        let out = unsafe { out_ref(out, "out") }?;
        let options = PcaOptions {
            whiten,
            ..PcaOptions::default()
        };
        let (_, projected) = fit_transform(&set.inner, target_dims, options)?;
        *out = Box::into_raw(Box::new(EgEmbeddingSet { inner: projected }));
        Ok(())
    })
}

/// Pairwise distances between all rows of `set`.
///
/// # Safety
/// `set` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_distance_matrix_compute(
    set: *const EgEmbeddingSet,
    kind: EgMetricKind,
    out: *mut *mut EgDistanceMatrix,
) -> EgStatus {
    guard(|| {
        let set = unsafe { borrow(set, "set") }?;
        let out = unsafe { out_ref(out, "out") }?;
        let inner = pairwise_matrix(&set.inner, metric_kind(kind))?.matrix;
        *out = Box::into_raw(Box::new(EgDistanceMatrix { inner }));
        Ok(())
    })
}

/// Wraps an externally computed `n x n` row-major matrix.
///
/// # Safety
/// `values` must hold `n * n` floats and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_distance_matrix_from_values(
    values: *const f32,
    n: usize,
    out: *mut *mut EgDistanceMatrix,
) -> EgStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let values = unsafe { slice(values, checked_len(n, n)?, "values") }?;
        let inner = DistanceMatrix::from_values(values.to_vec(), n, MatrixMetric::External)?;
        *out = Box::into_raw(Box::new(EgDistanceMatrix { inner }));
        Ok(())
    })
}

/// # Safety
/// `matrix` must be NULL or a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eg_distance_matrix_free(matrix: *mut EgDistanceMatrix) {
    if !matrix.is_null() {
        drop(unsafe { Box::from_raw(matrix) });
    }
}

/// Number of rows, or 0 for a NULL handle.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eg_distance_matrix_len(matrix: *const EgDistanceMatrix) -> usize {
    unsafe { matrix.as_ref() }.map_or(0, |m| m.inner.len())
}

/// # Safety
/// `matrix` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_distance_matrix_get(
    matrix: *const EgDistanceMatrix,
    i: usize,
    j: usize,
    out: *mut f64,
) -> EgStatus {
    guard(|| {
        let m = &unsafe { borrow(matrix, "matrix") }?.inner;
        let out = unsafe { out_ref(out, "out") }?;
        if i >= m.len() || j >= m.len() {
            return Err(Failure::new(
                EgStatus::InvalidArgument,
                format!("index ({i}, {j}) outside a {0} x {0} matrix", m.len()),
            ));
        }
        *out = m.get(i, j);
        Ok(())
    })
}

/// Copies the `n * n` row-major values into `out`, which holds `capacity` floats.
///
/// # Safety
/// `matrix` must be a live handle and `out` must hold `capacity` writable floats.
#[no_mangle]
pub unsafe extern "C" fn eg_distance_matrix_copy_values(
    matrix: *const EgDistanceMatrix,
    out: *mut f32,
    capacity: usize,
) -> EgStatus {
    guard(|| {
        let m = unsafe { borrow(matrix, "matrix") }?;
        copy_out(m.inner.values(), out, capacity)
    })
}

/// Builds labels from `n` strings. NULL or empty entries mark unlabeled items.
///
/// # Safety
/// `labels` must hold `n` pointers, each NULL or a NUL-terminated UTF-8
/// string, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_labels_new(labels: *const *const c_char, n: usize, out: *mut *mut EgLabels) -> EgStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let ptrs = unsafe { slice(labels, n, "labels") }?;
        let mut names = Vec::with_capacity(n);
        for (i, &p) in ptrs.iter().enumerate() {
            if p.is_null() {
                names.push(String::new());
                continue;
            }
            let s = unsafe { CStr::from_ptr(p) }
                .to_str()
                .map_err(|_| Failure::new(EgStatus::InvalidArgument, format!("label {i} is not UTF-8")))?;
            names.push(s.to_owned());
        }
        *out = Box::into_raw(Box::new(EgLabels {
            inner: LabelSet::new(names),
        }));
        Ok(())
    })
}

/// # Safety
/// `labels` must be NULL or a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eg_labels_free(labels: *mut EgLabels) {
    if !labels.is_null() {
        drop(unsafe { Box::from_raw(labels) });
    }
}

/// Number of distinct classes, or 0 for a NULL handle.
///
/// # Safety
/// `labels` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eg_labels_num_classes(labels: *const EgLabels) -> usize {
    unsafe { labels.as_ref() }.map_or(0, |l| l.inner.num_classes())
}

/// Computes one score. `k` is used only by `PrecisionAtK`.
///
/// # Safety
/// `matrix` and `labels` must be live handles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_metric_score(
    matrix: *const EgDistanceMatrix,
    labels: *const EgLabels,
    score: EgScore,
    k: usize,
    min_class_size: usize,
    out: *mut f64,
) -> EgStatus {
    guard(|| {
        let m = unsafe { borrow(matrix, "matrix") }?;
        let l = unsafe { borrow(labels, "labels") }?;
        let out = unsafe { out_ref(out, "out") }?;
        *out = metrics::score(&m.inner, &l.inner, metric_id(score, k), min_class_size)?;
        Ok(())
    })
}

/// Scores `n_permutations` label shuffles with the geometry fixed.
///
/// # Safety
/// `matrix` and `labels` must be live handles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_permutation_baseline(
    matrix: *const EgDistanceMatrix,
    labels: *const EgLabels,
    score: EgScore,
    k: usize,
    n_permutations: usize,
    seed: u64,
    min_class_size: usize,
    out: *mut EgPermutationSummary,
) -> EgStatus {
    guard(|| {
        let m = unsafe { borrow(matrix, "matrix") }?;
        let l = unsafe { borrow(labels, "labels") }?;
        let out = unsafe { out_ref(out, "out") }?;
        let r = permutation_baseline(&m.inner, &l.inner, metric_id(score, k), n_permutations, seed, min_class_size)?;
        *out = EgPermutationSummary {
            observed: r.observed,
            baseline_mean: r.baseline_mean,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            p_value: r.p_value,
            n_permutations: r.n_permutations,
        };
        Ok(())
    })
}

/// One-sided binomial tail `P(X >= successes)` for `X ~ Bin(n, chance)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_binomial_test(successes: u64, n: u64, chance: f64, out: *mut f64) -> EgStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = binomial_test(successes, n, chance)?;
        Ok(())
    })
}

/// Banded DTW between two row-major sequences of `dim`-wide frames.
///
/// # Safety
/// `a` must hold `len_a * dim` doubles, `b` must hold `len_b * dim` doubles
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_dtw_distance(
    a: *const f64,
    len_a: usize,
    b: *const f64,
    len_b: usize,
    dim: usize,
    band_radius: f64,
    normalize_path: bool,
    out: *mut EgDtwResult,
) -> EgStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let a = unsafe { slice(a, checked_len(len_a, dim)?, "a") }?;
        let b = unsafe { slice(b, checked_len(len_b, dim)?, "b") }?;
        let pa = PreparedSequence::new(a.to_vec(), dim)?;
        let pb = PreparedSequence::new(b.to_vec(), dim)?;
        let r = dtw_distance(&pa, &pb, band_radius, normalize_path)?;
        *out = EgDtwResult {
            distance: r.distance,
            cost: r.cost,
            path_len: r.path_len,
            widened: r.widened,
        };
        Ok(())
    })
}
