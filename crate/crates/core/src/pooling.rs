//! Collapses a `T x D` frame sequence into a fixed-length vector.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::stats::EPS;
use crate::tensor::{EmbeddingSet, SequenceEmbedding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PoolingKind {
    /// Mean over all `T` rows, padding included.
    MeanTimeInclPad,
    /// Mean over the first `valid_len` rows.
    MeanTimeMasked,
    /// Per-frame mean across features (length `T`).
    MeanFeat,
    FirstTime,
    /// Column 0 (length `T`).
    FirstFeat,
    LastTime,
    MaxTime,
    /// Rows weighted by their L2 norm share.
    AttentionMagnitude,
}

impl PoolingKind {
    pub const ALL: [PoolingKind; 8] = [
        PoolingKind::MeanTimeInclPad,
        PoolingKind::MeanTimeMasked,
        PoolingKind::MeanFeat,
        PoolingKind::FirstTime,
        PoolingKind::FirstFeat,
        PoolingKind::LastTime,
        PoolingKind::MaxTime,
        PoolingKind::AttentionMagnitude,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PoolingKind::MeanTimeInclPad => "mean_time_incl_pad",
            PoolingKind::MeanTimeMasked => "mean_time_masked",
            PoolingKind::MeanFeat => "mean_feat",
            PoolingKind::FirstTime => "first_time",
            PoolingKind::FirstFeat => "first_feat",
            PoolingKind::LastTime => "last_time",
            PoolingKind::MaxTime => "max_time",
            PoolingKind::AttentionMagnitude => "attention_magnitude",
        }
    }

    /// True when the output length is `T` rather than `D`.
    pub fn is_time_length(self) -> bool {
        matches!(self, PoolingKind::MeanFeat | PoolingKind::FirstFeat)
    }

    pub fn output_len(self, seq: &SequenceEmbedding) -> usize {
        if self.is_time_length() {
            seq.len()
        } else {
            seq.dim()
        }
    }
}

impl fmt::Display for PoolingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoolingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PoolingKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown pooling kind `{s}`")))
    }
}

/// A pooling kind, optionally concatenated with a second one.
///
/// Textual form is `kind` or `kind+kind`, e.g. `mean_time_incl_pad+mean_feat`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PoolingStrategy {
    pub kind: PoolingKind,
    pub concat_with: Option<PoolingKind>,
}

impl PoolingStrategy {
    pub const fn single(kind: PoolingKind) -> Self {
        Self {
            kind,
            concat_with: None,
        }
    }

    pub const fn concat(kind: PoolingKind, second: PoolingKind) -> Self {
        Self {
            kind,
            concat_with: Some(second),
        }
    }

    fn parts(&self) -> impl Iterator<Item = PoolingKind> {
        std::iter::once(self.kind).chain(self.concat_with)
    }
}

impl Default for PoolingStrategy {
    fn default() -> Self {
        Self::concat(PoolingKind::MeanTimeInclPad, PoolingKind::MeanFeat)
    }
}

impl fmt::Display for PoolingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.concat_with {
            Some(second) => write!(f, "{}+{}", self.kind, second),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl FromStr for PoolingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('+') {
            Some((a, b)) => Ok(Self::concat(a.trim().parse()?, b.trim().parse()?)),
            None => Ok(Self::single(s.trim().parse()?)),
        }
    }
}

fn pool_kind(seq: &SequenceEmbedding, kind: PoolingKind, out: &mut Vec<f64>) -> Result<()> {
    let (t, d) = (seq.len(), seq.dim());
    if t == 0 {
        return Err(Error::EmptySequence {
            clip_id: seq.clip_id.clone(),
        });
    }
    match kind {
        PoolingKind::MeanTimeInclPad | PoolingKind::MeanTimeMasked => {
            let rows = if kind == PoolingKind::MeanTimeMasked {
                seq.valid_len()
            } else {
                t
            };
            if rows == 0 {
                return Err(Error::Degenerate(format!(
                    "clip `{}` has no valid frames for masked mean",
                    seq.clip_id
                )));
            }
            let mut acc = vec![0.0f64; d];
            for row in seq.rows().take(rows) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += f64::from(v);
                }
            }
            out.extend(acc.into_iter().map(|a| a / rows as f64));
        }
        PoolingKind::MeanFeat => {
            out.extend(seq.rows().map(|row| {
                row.iter().map(|&v| f64::from(v)).sum::<f64>() / d as f64
            }));
        }
        PoolingKind::FirstTime => out.extend(seq.row(0).iter().map(|&v| f64::from(v))),
        PoolingKind::FirstFeat => out.extend(seq.rows().map(|row| f64::from(row[0]))),
        PoolingKind::LastTime => out.extend(seq.row(t - 1).iter().map(|&v| f64::from(v))),
        PoolingKind::MaxTime => {
            let mut acc = vec![f64::NEG_INFINITY; d];
            for row in seq.rows() {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a = a.max(f64::from(v));
                }
            }
            out.extend(acc);
        }
        PoolingKind::AttentionMagnitude => {
            let norms: Vec<f64> = seq
                .rows()
                .map(|row| row.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt())
                .collect();
            let total: f64 = norms.iter().sum::<f64>() + EPS;
            let mut acc = vec![0.0f64; d];
            for (row, norm) in seq.rows().zip(&norms) {
                let w = norm / total;
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += w * f64::from(v);
                }
            }
            out.extend(acc);
        }
    }
    Ok(())
}

/// Pools one sequence; concatenated strategies append the second part.
pub fn pool(seq: &SequenceEmbedding, strategy: PoolingStrategy) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for kind in strategy.parts() {
        pool_kind(seq, kind, &mut out)?;
    }
    Ok(out)
}

/// Result of pooling a whole subset.
#[derive(Debug, Clone)]
pub struct PooledSet {
    pub set: EmbeddingSet,
    /// Set when `T`-length parts had to be zero-padded or truncated to a
    /// common length because sequences in the subset differ in `T`.
    pub time_axis_adjusted: bool,
}

/// Pools every sequence of a subset into an [`EmbeddingSet`].
///
/// `T`-length parts (`mean_feat`, `first_feat`) are zero-padded to the
/// subset's maximum `T` when sequence lengths differ.
pub fn pool_set(sequences: &[SequenceEmbedding], strategy: PoolingStrategy) -> Result<PooledSet> {
    let max_t = sequences.iter().map(SequenceEmbedding::len).max().unwrap_or(0);
    let dims: Vec<usize> = sequences.iter().map(SequenceEmbedding::dim).collect();
    if let Some(&d0) = dims.first() {
        if let Some(&bad) = dims.iter().find(|&&d| d != d0) {
            return Err(Error::DimensionMismatch {
                expected: d0,
                found: bad,
            });
        }
    }
    let mut adjusted = false;
    let mut data = Vec::new();
    for seq in sequences {
        for kind in strategy.parts() {
            let start = data.len();
            pool_kind(seq, kind, &mut data)?;
            if kind.is_time_length() && seq.len() != max_t {
                adjusted = true;
                data.resize(start + max_t, 0.0);
            }
        }
    }
    let d = if sequences.is_empty() {
        0
    } else {
        data.len() / sequences.len()
    };
    let ids = sequences.iter().map(|s| s.clip_id.clone()).collect();
    Ok(PooledSet {
        set: EmbeddingSet::new(ids, data, d)?,
        time_axis_adjusted: adjusted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(rows: &[&[f32]]) -> SequenceEmbedding {
        SequenceEmbedding::from_rows("s", &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn mean_time_and_concat() {
        let s = seq(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(
            pool(&s, PoolingStrategy::single(PoolingKind::MeanTimeInclPad)).unwrap(),
            vec![2.0, 3.0]
        );
        assert_eq!(pool(&s, PoolingStrategy::default()).unwrap(), vec![2.0, 3.0, 1.5, 3.5]);
    }

    #[test]
    fn attention_weights_by_row_norm() {
        let s = seq(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let got = pool(&s, PoolingStrategy::single(PoolingKind::AttentionMagnitude)).unwrap();
        // Oracle: direct weighted sum with w1 = sqrt5/(sqrt5+5), w2 = 5/(sqrt5+5).
        let s5 = 5f64.sqrt();
        let (w1, w2) = (s5 / (s5 + 5.0), 5.0 / (s5 + 5.0));
        let want = [w1 * 1.0 + w2 * 3.0, w1 * 2.0 + w2 * 4.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn positional_kinds() {
        let s = seq(&[&[1.0, 5.0], &[3.0, 4.0], &[2.0, 6.0]]);
        let p = |k| pool(&s, PoolingStrategy::single(k)).unwrap();
        assert_eq!(p(PoolingKind::FirstTime), vec![1.0, 5.0]);
        assert_eq!(p(PoolingKind::LastTime), vec![2.0, 6.0]);
        assert_eq!(p(PoolingKind::FirstFeat), vec![1.0, 3.0, 2.0]);
        assert_eq!(p(PoolingKind::MaxTime), vec![3.0, 6.0]);
    }

    #[test]
    fn masked_mean_ignores_padding() {
        let s = SequenceEmbedding::new("s", vec![1.0, 1.0, 3.0, 3.0, 100.0, 100.0], 3, 2, 2).unwrap();
        assert_eq!(
            pool(&s, PoolingStrategy::single(PoolingKind::MeanTimeMasked)).unwrap(),
            vec![2.0, 2.0]
        );
    }

    #[test]
    fn strategy_names_roundtrip() {
        for k in PoolingKind::ALL {
            assert_eq!(k.as_str().parse::<PoolingKind>().unwrap(), k);
        }
        let s: PoolingStrategy = "mean_time_incl_pad+mean_feat".parse().unwrap();
        assert_eq!(s, PoolingStrategy::default());
        assert_eq!(s.to_string(), "mean_time_incl_pad+mean_feat");
        assert!("mean".parse::<PoolingStrategy>().is_err());
    }

    #[test]
    fn pool_set_pads_time_parts() {
        let a = seq(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        let b = SequenceEmbedding::from_rows("b", &[vec![2.0, 4.0]]).unwrap();
        let out = pool_set(&[a, b], PoolingStrategy::default()).unwrap();
        assert!(out.time_axis_adjusted);
        assert_eq!(out.set.dim(), 5);
        assert_eq!(out.set.row(1), &[2.0, 4.0, 3.0, 0.0, 0.0]);
    }

    fn arb_seq() -> impl Strategy<Value = (usize, usize, Vec<f32>, usize)> {
        (1usize..6, 1usize..6).prop_flat_map(|(t, d)| {
            (
                Just(t),
                Just(d),
                proptest::collection::vec(-10.0f32..10.0, t * d),
                1..=t,
            )
        })
    }

    proptest! {
        #[test]
        fn time_pooling_is_column_equivariant((t, d, data, vl) in arb_seq(), rot in 0usize..6) {
            let s = SequenceEmbedding::new("s", data.clone(), t, d, vl).unwrap();
            let perm: Vec<usize> = (0..d).map(|j| (j + rot) % d).collect();
            let permuted: Vec<f32> = (0..t)
                .flat_map(|i| perm.iter().map(move |&j| (i, j)))
                .map(|(i, j)| data[i * d + j])
                .collect();
            let sp = SequenceEmbedding::new("s", permuted, t, d, vl).unwrap();
            for kind in PoolingKind::ALL.into_iter().filter(|k| !k.is_time_length()) {
                let a = pool(&s, PoolingStrategy::single(kind)).unwrap();
                let b = pool(&sp, PoolingStrategy::single(kind)).unwrap();
                for (k, &j) in perm.iter().enumerate() {
                    prop_assert!((b[k] - a[j]).abs() <= 1e-9 * (1.0 + a[j].abs()), "{kind}");
                }
            }
        }

        #[test]
        fn constant_sequence_is_fixed_point(t in 1usize..6, row in proptest::collection::vec(-5.0f32..5.0, 1..6)) {
            let rows = vec![row.clone(); t];
            let s = SequenceEmbedding::from_rows("c", &rows).unwrap();
            let r: Vec<f64> = row.iter().map(|&v| f64::from(v)).collect();
            for kind in PoolingKind::ALL.into_iter().filter(|k| !k.is_time_length()) {
                let p = pool(&s, PoolingStrategy::single(kind)).unwrap();
                for (a, b) in p.iter().zip(&r) {
                    prop_assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{kind}: {a} vs {b}");
                }
            }
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            let mf = pool(&s, PoolingStrategy::single(PoolingKind::MeanFeat)).unwrap();
            prop_assert_eq!(mf.len(), t);
            prop_assert!(mf.iter().all(|v| (v - mean).abs() < 1e-9));
        }

        #[test]
        fn masked_equals_incl_pad_at_full_length((t, d, data, _vl) in arb_seq()) {
            let s = SequenceEmbedding::new("s", data, t, d, t).unwrap();
            prop_assert_eq!(
                pool(&s, PoolingStrategy::single(PoolingKind::MeanTimeMasked)).unwrap(),
                pool(&s, PoolingStrategy::single(PoolingKind::MeanTimeInclPad)).unwrap()
            );
        }
    }
}
