//! Cosine, Euclidean and Spearman distances, single-pair and full matrix.
//!
//! Every pair goes through the same prepared-row kernel whether it is asked
//! for alone or as part of a matrix, so matrix entries equal the single-pair
//! results bit for bit (after the `f32` storage cast).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stats::{average_ranks_into, EPS};
use crate::tensor::{DistanceMatrix, EmbeddingSet, MatrixMetric};

/// Largest `N` for which a dense matrix is materialized.
pub const MAX_MATRIX_ROWS: usize = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    Cosine,
    Euclidean,
    Spearman,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Cosine, MetricKind::Euclidean, MetricKind::Spearman];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Cosine => "cosine",
            MetricKind::Euclidean => "euclidean",
            MetricKind::Spearman => "spearman",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown metric `{s}`")))
    }
}

impl From<MetricKind> for MatrixMetric {
    fn from(m: MetricKind) -> Self {
        match m {
            MetricKind::Cosine => MatrixMetric::Cosine,
            MetricKind::Euclidean => MatrixMetric::Euclidean,
            MetricKind::Spearman => MatrixMetric::Spearman,
        }
    }
}

/// Conventions applied to pairs where the metric is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceFlag {
    /// A zero-norm vector under cosine; distance set to 1.
    ZeroNorm,
    /// A constant vector under Spearman (zero rank variance); distance set to 1.
    ConstantRanks,
}

/// 1-based ranks with ties averaged.
pub fn rank_transform(v: &[f64]) -> Vec<f64> {
    crate::stats::average_ranks(v)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let d0 = x[0] - y[0];
        let d1 = x[1] - y[1];
        let d2 = x[2] - y[2];
        let d3 = x[3] - y[3];
        acc[0] += d0 * d0;
        acc[1] += d1 * d1;
        acc[2] += d2 * d2;
        acc[3] += d3 * d3;
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Rows transformed once so each pair costs a single pass.
struct Prepared {
    metric: MetricKind,
    dim: usize,
    /// Raw rows (cosine, euclidean) or centered ranks (spearman).
    rows: Vec<f64>,
    /// Squared norm of each prepared row (unused for euclidean).
    norms: Vec<f64>,
}

impl Prepared {
    fn new<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, dim: usize, metric: MetricKind) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * dim);
        match metric {
            MetricKind::Cosine | MetricKind::Euclidean => {
                for r in rows {
                    data.extend_from_slice(r);
                }
            }
            MetricKind::Spearman => {
                let center = (dim as f64 + 1.0) / 2.0;
                let mut ranks = vec![0.0; dim];
                let mut order = Vec::with_capacity(dim);
                for r in rows {
                    average_ranks_into(r, &mut ranks, &mut order);
                    data.extend(ranks.iter().map(|x| x - center));
                }
            }
        }
        let norms = match metric {
            MetricKind::Euclidean => Vec::new(),
            _ => data.chunks_exact(dim).map(|r| dot(r, r)).collect(),
        };
        Self {
            metric,
            dim,
            rows: data,
            norms,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    fn is_degenerate(&self, i: usize) -> bool {
        match self.metric {
            MetricKind::Euclidean => false,
            MetricKind::Cosine => self.norms[i].sqrt() <= EPS,
            MetricKind::Spearman => self.norms[i] == 0.0,
        }
    }

    #[inline]
    fn pair(&self, i: usize, j: usize) -> (f64, Option<DistanceFlag>) {
        let (a, b) = (self.row(i), self.row(j));
        match self.metric {
            MetricKind::Euclidean => (squared_distance(a, b).sqrt(), None),
            MetricKind::Cosine => {
                let denom = (self.norms[i] * self.norms[j]).sqrt();
                if denom <= EPS {
                    (1.0, Some(DistanceFlag::ZeroNorm))
                } else {
                    ((1.0 - dot(a, b) / denom).clamp(0.0, 2.0), None)
                }
            }
            MetricKind::Spearman => {
                let denom = (self.norms[i] * self.norms[j]).sqrt();
                if denom == 0.0 {
                    (1.0, Some(DistanceFlag::ConstantRanks))
                } else {
                    ((1.0 - dot(a, b) / denom).clamp(0.0, 2.0), None)
                }
            }
        }
    }
}

fn check_pair(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    if u.len() < 2 {
        return Err(Error::Parameter("vectors need at least 2 entries".into()));
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::Parameter("non-finite vector entry".into()));
    }
    Ok(())
}

/// Distance between two vectors, with the convention flag if one applied.
pub fn distance_flagged(u: &[f64], v: &[f64], metric: MetricKind) -> Result<(f64, Option<DistanceFlag>)> {
    check_pair(u, v)?;
    let prepared = Prepared::new([u, v].into_iter(), u.len(), metric);
    Ok(prepared.pair(0, 1))
}

pub fn distance(u: &[f64], v: &[f64], metric: MetricKind) -> Result<f64> {
    distance_flagged(u, v, metric).map(|(d, _)| d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairwiseOptions {
    /// Rows per parallel work unit.
    pub block_rows: usize,
    /// Columns per cache tile inside a block.
    pub col_tile: usize,
}

impl Default for PairwiseOptions {
    fn default() -> Self {
        Self {
            block_rows: 32,
            col_tile: 256,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairwiseResult {
    pub matrix: DistanceMatrix,
    /// Pairs where a [`DistanceFlag`] convention was applied.
    pub flagged_pairs: u64,
}

pub fn pairwise_matrix(set: &EmbeddingSet, metric: MetricKind) -> Result<PairwiseResult> {
    pairwise_matrix_with(set, metric, PairwiseOptions::default())
}

pub fn pairwise_matrix_with(
    set: &EmbeddingSet,
    metric: MetricKind,
    options: PairwiseOptions,
) -> Result<PairwiseResult> {
    let n = set.len();
    if n < 2 {
        return Err(Error::DegenerateDataset("pairwise matrix needs N >= 2".into()));
    }
    if n > MAX_MATRIX_ROWS {
        return Err(Error::Parameter(format!(
            "N = {n} exceeds the dense-matrix limit of {MAX_MATRIX_ROWS}; \
             split the subset or evaluate a sample"
        )));
    }
    if set.dim() < 2 {
        return Err(Error::Parameter("vectors need at least 2 entries".into()));
    }
    let prepared = Prepared::new(set.rows(), set.dim(), metric);
    let block = options.block_rows.max(1);
    let tile = options.col_tile.max(1);

    let mut values = vec![0f32; n * n];
    values
        .par_chunks_mut(block * n)
        .enumerate()
        .for_each(|(b, chunk)| {
            let i0 = b * block;
            let rows = chunk.len() / n;
            let mut j0 = i0 + 1;
            while j0 < n {
                let j1 = (j0 + tile).min(n);
                for r in 0..rows {
                    let i = i0 + r;
                    let out = &mut chunk[r * n..(r + 1) * n];
                    let first = j0.max(i + 1);
                    for (j, slot) in out.iter_mut().enumerate().take(j1).skip(first) {
                        *slot = prepared.pair(i, j).0 as f32;
                    }
                }
                j0 = j1;
            }
        });
    mirror_upper(&mut values, n);

    let degenerate = (0..n).filter(|&i| prepared.is_degenerate(i)).count() as u64;
    let total = n as u64;
    // pairs with at least one degenerate row
    let flagged_pairs =
        degenerate * (degenerate.saturating_sub(1)) / 2 + degenerate * (total - degenerate);
    Ok(PairwiseResult {
        matrix: DistanceMatrix::from_trusted(values, n, metric.into()),
        flagged_pairs,
    })
}

fn mirror_upper(values: &mut [f32], n: usize) {
    const TILE: usize = 64;
    for bi in (0..n).step_by(TILE) {
        for bj in (bi..n).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                for j in bj.max(i + 1)..(bj + TILE).min(n) {
                    values[j * n + i] = values[i * n + j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_transform(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        assert_eq!(rank_transform(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(rank_transform(&[7.0; 5]), vec![3.0; 5]);
    }

    #[test]
    fn identity_is_zero_for_every_metric() {
        let u = [1.0, 2.0, 3.0];
        for m in MetricKind::ALL {
            assert_eq!(distance(&u, &u, m).unwrap(), 0.0, "{m}");
        }
    }

    #[test]
    fn orthogonal_pair() {
        let (u, v) = ([1.0, 0.0], [0.0, 1.0]);
        assert_eq!(distance(&u, &v, MetricKind::Cosine).unwrap(), 1.0);
        assert_eq!(distance(&u, &v, MetricKind::Euclidean).unwrap(), 2f64.sqrt());
    }

    #[test]
    fn spearman_examples() {
        // Oracle: ranks [1,2,3] vs [3,2,1] -> rho = -1; [1,2,3] vs [1,3,2] -> rho = 0.5.
        let u = [1.0, 2.0, 3.0];
        assert_eq!(distance(&u, &[3.0, 2.0, 1.0], MetricKind::Spearman).unwrap(), 2.0);
        assert!((distance(&u, &[1.0, 3.0, 2.0], MetricKind::Spearman).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_conventions_flagged() {
        let z = [0.0, 0.0, 0.0];
        let u = [1.0, 2.0, 3.0];
        assert_eq!(
            distance_flagged(&z, &u, MetricKind::Cosine).unwrap(),
            (1.0, Some(DistanceFlag::ZeroNorm))
        );
        assert_eq!(
            distance_flagged(&[4.0; 3], &u, MetricKind::Spearman).unwrap(),
            (1.0, Some(DistanceFlag::ConstantRanks))
        );
        assert!(distance(&[1.0], &[2.0], MetricKind::Euclidean).is_err());
        assert!(distance(&[1.0, 2.0], &[2.0], MetricKind::Euclidean).is_err());
        assert!(distance(&[1.0, f64::NAN], &[2.0, 1.0], MetricKind::Euclidean).is_err());
    }

    #[test]
    fn small_matrices() {
        let same = EmbeddingSet::from_rows(&vec![vec![1.0, 2.0, 3.0]; 3]).unwrap();
        for m in MetricKind::ALL {
            let out = pairwise_matrix(&same, m).unwrap();
            assert!(out.matrix.values().iter().all(|&v| v == 0.0), "{m}");
        }
        let basis = EmbeddingSet::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let out = pairwise_matrix(&basis, MetricKind::Cosine).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(out.matrix.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn flagged_pairs_counted() {
        let set = EmbeddingSet::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 2.0],
            vec![3.0, 1.0],
        ])
        .unwrap();
        assert_eq!(pairwise_matrix(&set, MetricKind::Cosine).unwrap().flagged_pairs, 2);
        assert_eq!(pairwise_matrix(&set, MetricKind::Euclidean).unwrap().flagged_pairs, 0);
    }

    fn lcg_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn matrix_equals_naive_double_loop() {
        let rows = lcg_rows(10, 8, 3);
        let set = EmbeddingSet::from_rows(&rows).unwrap();
        for m in MetricKind::ALL {
            let out = pairwise_matrix_with(&set, m, PairwiseOptions { block_rows: 3, col_tile: 4 }).unwrap();
            for i in 0..10 {
                for j in 0..10 {
                    let want = if i == j { 0.0 } else { distance(&rows[i], &rows[j], m).unwrap() as f32 };
                    assert_eq!(out.matrix.row(i)[j].to_bits(), want.to_bits(), "{m} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn blocking_does_not_change_bytes() {
        let set = EmbeddingSet::from_rows(&lcg_rows(37, 9, 11)).unwrap();
        for m in MetricKind::ALL {
            let a = pairwise_matrix_with(&set, m, PairwiseOptions { block_rows: 1, col_tile: 1 }).unwrap();
            let b = pairwise_matrix_with(&set, m, PairwiseOptions { block_rows: 64, col_tile: 1024 }).unwrap();
            assert_eq!(a.matrix, b.matrix);
        }
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant_for_powers_of_two(
            u in proptest::collection::vec(-100.0f64..100.0, 4),
            v in proptest::collection::vec(-100.0f64..100.0, 4),
            k in -20i32..20
        ) {
            let c = 2f64.powi(k);
            let us: Vec<f64> = u.iter().map(|x| x * c).collect();
            prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
            prop_assert_eq!(
                distance(&u, &v, MetricKind::Cosine).unwrap(),
                distance(&us, &v, MetricKind::Cosine).unwrap()
            );
        }

        #[test]
        fn spearman_invariant_under_cubing(
            u in proptest::collection::vec(-3.0f64..3.0, 2..12),
            seed in any::<u64>()
        ) {
            let v: Vec<f64> = lcg_rows(1, u.len(), seed).remove(0);
            let cubed: Vec<f64> = u.iter().map(|x| x * x * x).collect();
            prop_assume!(rank_transform(&cubed) == rank_transform(&u));
            prop_assert_eq!(
                distance(&u, &v, MetricKind::Spearman).unwrap(),
                distance(&cubed, &v, MetricKind::Spearman).unwrap()
            );
        }

        #[test]
        fn ranges_hold(u in proptest::collection::vec(-5.0f64..5.0, 3), v in proptest::collection::vec(-5.0f64..5.0, 3)) {
            for m in MetricKind::ALL {
                let d = distance(&u, &v, m).unwrap();
                prop_assert!(d >= 0.0);
                if m != MetricKind::Euclidean {
                    prop_assert!(d <= 2.0);
                }
                prop_assert_eq!(d, distance(&v, &u, m).unwrap());
            }
        }
    }
}
