//! Data model shared by every stage: frame sequences, pooled embedding sets,
//! label sets and distance matrices, plus the on-disk interchange format and
//! dataset manifests.

mod format;
mod labels;
mod manifest;

use std::collections::HashSet;

pub use format::{
    read_matrix_file, read_tensor_file, sanitize, write_matrix_file, write_tensor_file,
    TensorFile, TensorHeader, MAGIC,
};
pub use labels::{read_labels_csv, IdIndex, LabelSet, INVALID_CLASS};
pub use manifest::{
    filter_dataset, load_sequence_set, read_manifest, DatasetManifest, LoadedSequences,
    ManifestItem,
};

use crate::error::{Error, Result};

/// One clip's frame-level features: a `T x D` row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEmbedding {
    pub clip_id: String,
    frames: Vec<f32>,
    t: usize,
    d: usize,
    valid_len: usize,
}

impl SequenceEmbedding {
    pub fn new(
        clip_id: impl Into<String>,
        frames: Vec<f32>,
        t: usize,
        d: usize,
        valid_len: usize,
    ) -> Result<Self> {
        let clip_id = clip_id.into();
        if t == 0 {
            return Err(Error::EmptySequence { clip_id });
        }
        if d == 0 {
            return Err(Error::format(&clip_id, "feature dimension is zero"));
        }
        if frames.len() != t * d {
            return Err(Error::format(
                &clip_id,
                format!("expected {} values for shape [{t}, {d}], found {}", t * d, frames.len()),
            ));
        }
        if valid_len == 0 || valid_len > t {
            return Err(Error::format(
                &clip_id,
                format!("valid_len {valid_len} outside 1..={t}"),
            ));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(&clip_id, "non-finite frame values"));
        }
        Ok(Self {
            clip_id,
            frames,
            t,
            d,
            valid_len,
        })
    }

    /// Convenience constructor from nested rows with `valid_len == T`.
    pub fn from_rows(clip_id: impl Into<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let clip_id = clip_id.into();
        let t = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::format(&clip_id, "ragged rows"));
        }
        let frames = rows.iter().flatten().copied().collect();
        Self::new(clip_id, frames, t, d, t)
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn valid_len(&self) -> usize {
        self.valid_len
    }

    pub fn frames(&self) -> &[f32] {
        &self.frames
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.frames[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.frames.chunks_exact(self.d)
    }
}

/// `N` fixed-length vectors, row-aligned with clip identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, data: Vec<f64>, d: usize) -> Result<Self> {
        let n = ids.len();
        if n < 2 {
            return Err(Error::DegenerateDataset(format!(
                "embedding set needs at least 2 rows, found {n}"
            )));
        }
        if d == 0 {
            return Err(Error::Parameter("embedding dimension must be positive".into()));
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite value in row {} of embedding set",
                pos / d
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Parameter(format!("duplicate clip id `{id}`")));
            }
        }
        Ok(Self { ids, data, n, d })
    }

    /// Builds a set with generated ids `0..N`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Parameter("ragged rows".into()));
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(ids, rows.iter().flatten().copied().collect(), d)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Reorders rows; `order[k]` is the source row of output row `k`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: order.len(),
            });
        }
        let ids = order.iter().map(|&i| self.ids[i].clone()).collect();
        let data = order.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self::new(ids, data, self.d)
    }
}

/// What produced a distance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MatrixMetric {
    Cosine,
    Euclidean,
    Spearman,
    DtwRerank,
    External,
}

impl MatrixMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixMetric::Cosine => "cosine",
            MatrixMetric::Euclidean => "euclidean",
            MatrixMetric::Spearman => "spearman",
            MatrixMetric::DtwRerank => "dtw_rerank",
            MatrixMetric::External => "external",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "cosine" => MatrixMetric::Cosine,
            "euclidean" => MatrixMetric::Euclidean,
            "spearman" => MatrixMetric::Spearman,
            "dtw_rerank" => MatrixMetric::DtwRerank,
            "external" => MatrixMetric::External,
            _ => return None,
        })
    }
}

impl std::fmt::Display for MatrixMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Symmetric, nonnegative `N x N` matrix with an exactly-zero diagonal.
///
/// Values are stored as full rows of `f32`; readers widen to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Vec<f32>,
    n: usize,
    metric: MatrixMetric,
}

impl DistanceMatrix {
    /// Validates and wraps a row-major `N x N` buffer.
    pub fn from_values(values: Vec<f32>, n: usize, metric: MatrixMetric) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: values.len(),
            });
        }
        if n < 2 {
            return Err(Error::DegenerateDataset(format!(
                "distance matrix needs N >= 2, found {n}"
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::Parameter(format!("nonzero diagonal at row {i}")));
            }
            for j in (i + 1)..n {
                let a = values[i * n + j];
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::Parameter(format!(
                        "entry ({i}, {j}) = {a} is not a finite nonnegative distance"
                    )));
                }
                if a.to_bits() != values[j * n + i].to_bits() {
                    return Err(Error::Parameter(format!("asymmetric entry ({i}, {j})")));
                }
            }
        }
        Ok(Self { values, n, metric })
    }

    /// Builds from an upper-triangle closure, mirroring into the lower half.
    pub fn from_fn(n: usize, metric: MatrixMetric, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = vec![0f32; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j) as f32;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self::from_values(values, n, metric)
    }

    pub(crate) fn from_trusted(values: Vec<f32>, n: usize, metric: MatrixMetric) -> Self {
        debug_assert_eq!(values.len(), n * n);
        Self { values, n, metric }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn metric(&self) -> MatrixMetric {
        self.metric
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        f64::from(self.values[i * self.n + j])
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Applies a symmetric relabeling of rows and columns.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.n;
        let mut values = vec![0f32; n * n];
        for (a, &i) in order.iter().enumerate() {
            for (b, &j) in order.iter().enumerate() {
                values[a * n + b] = self.values[i * n + j];
            }
        }
        Self::from_trusted(values, n, self.metric)
    }

    /// Restricts to the given rows (and matching columns).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let m = keep.len();
        let mut values = Vec::with_capacity(m * m);
        for &i in keep {
            let row = self.row(i);
            values.extend(keep.iter().map(|&j| row[j]));
        }
        Self::from_trusted(values, m, self.metric)
    }
}
