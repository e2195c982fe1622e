//! Label-structure scores computed from a distance matrix.
//!
//! All functions accept a [`DistanceMatrix`] and a row-aligned [`LabelSet`].
//! Rows whose label is missing never contribute. The lower-level `*_codes`
//! entry points take dense class codes directly so repeated evaluation under
//! shuffled labels avoids rebuilding label sets.

mod classpair;
mod neighbors;
mod separation;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{DistanceMatrix, LabelSet, INVALID_CLASS};

pub use classpair::{class_pair_stats, cscf, cscf_codes, f_value_cs, f_value_cs_codes, ClassPairStats};
pub use neighbors::{precision_at_k, precision_from_table, NeighborTable};
pub(crate) use neighbors::nearest;
pub use separation::{
    csr, csr_codes, csr_with, gsr, gsr_codes, gsr_with, point_separations, silhouette, silhouette_codes,
    silhouette_detailed, NearestPrefix, PointSeparation, SilhouetteOutcome,
};

/// Default minimum class size for the point-wise and class-pair scores.
pub const DEFAULT_MIN_CLASS_SIZE: usize = 2;

/// Identifies one distance-based score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricId {
    PAtK(usize),
    Gsr,
    Csr,
    Cs,
    Cscf,
    Silhouette,
}

impl MetricId {
    pub const P_AT_1: MetricId = MetricId::PAtK(1);
    pub const P_AT_5: MetricId = MetricId::PAtK(5);

    /// Whether the score is a fraction in `[0, 1]` (GSR is already a percentage).
    pub fn is_fraction(self) -> bool {
        !matches!(self, MetricId::Gsr | MetricId::Silhouette)
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricId::PAtK(k) => write!(f, "p@{k}"),
            MetricId::Gsr => f.write_str("gsr"),
            MetricId::Csr => f.write_str("csr"),
            MetricId::Cs => f.write_str("cs"),
            MetricId::Cscf => f.write_str("cscf"),
            MetricId::Silhouette => f.write_str("silhouette"),
        }
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let k = lower
            .strip_prefix("p@")
            .or_else(|| lower.strip_prefix("p_at_"))
            .or_else(|| lower.strip_prefix("pat"));
        if let Some(k) = k {
            return match k.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(MetricId::PAtK(k)),
                _ => Err(Error::Parameter(format!("bad precision metric `{s}`"))),
            };
        }
        match lower.as_str() {
            "gsr" => Ok(MetricId::Gsr),
            "csr" => Ok(MetricId::Csr),
            "cs" | "f_value" | "fvalue" => Ok(MetricId::Cs),
            "cscf" => Ok(MetricId::Cscf),
            "silhouette" => Ok(MetricId::Silhouette),
            _ => Err(Error::Parameter(format!("unknown metric `{s}`"))),
        }
    }
}

/// Scores gathered for one matrix/label pair. Missing entries were either
/// not requested or failed; see the per-metric functions for the reason.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricScores {
    pub p_at_k: BTreeMap<usize, f64>,
    pub gsr: Option<f64>,
    pub csr: Option<f64>,
    pub cs: Option<f64>,
    pub cscf: Option<f64>,
    pub silhouette: Option<f64>,
    /// Labeled rows.
    pub n_evaluable: usize,
}

impl MetricScores {
    pub fn get(&self, id: MetricId) -> Option<f64> {
        match id {
            MetricId::PAtK(k) => self.p_at_k.get(&k).copied(),
            MetricId::Gsr => self.gsr,
            MetricId::Csr => self.csr,
            MetricId::Cs => self.cs,
            MetricId::Cscf => self.cscf,
            MetricId::Silhouette => self.silhouette,
        }
    }

    fn set(&mut self, id: MetricId, value: f64) {
        match id {
            MetricId::PAtK(k) => {
                self.p_at_k.insert(k, value);
            }
            MetricId::Gsr => self.gsr = Some(value),
            MetricId::Csr => self.csr = Some(value),
            MetricId::Cs => self.cs = Some(value),
            MetricId::Cscf => self.cscf = Some(value),
            MetricId::Silhouette => self.silhouette = Some(value),
        }
    }
}

pub(crate) fn check_aligned(dist: &DistanceMatrix, n_labels: usize) -> Result<()> {
    if dist.len() != n_labels {
        return Err(Error::DimensionMismatch {
            expected: dist.len(),
            found: n_labels,
        });
    }
    Ok(())
}

/// Marks rows of classes smaller than `min_size` as unlabeled.
pub(crate) fn restrict_codes(codes: &[u32], num_classes: usize, min_size: usize) -> Vec<u32> {
    let mut sizes = vec![0usize; num_classes];
    for &c in codes {
        if c != INVALID_CLASS {
            sizes[c as usize] += 1;
        }
    }
    codes
        .iter()
        .map(|&c| {
            if c != INVALID_CLASS && sizes[c as usize] >= min_size {
                c
            } else {
                INVALID_CLASS
            }
        })
        .collect()
}

pub(crate) fn distinct_classes(codes: &[u32], num_classes: usize) -> usize {
    let mut seen = vec![false; num_classes];
    for &c in codes {
        if c != INVALID_CLASS {
            seen[c as usize] = true;
        }
    }
    seen.into_iter().filter(|&s| s).count()
}

/// Computes one score from class codes.
pub fn score_codes(
    dist: &DistanceMatrix,
    codes: &[u32],
    num_classes: usize,
    id: MetricId,
    min_class_size: usize,
) -> Result<f64> {
    check_aligned(dist, codes.len())?;
    match id {
        MetricId::PAtK(k) => {
            let table = NeighborTable::build(dist, codes, k)?;
            precision_from_table(&table, codes, k)
        }
        MetricId::Gsr => gsr_codes(dist, codes, num_classes, min_class_size),
        MetricId::Csr => csr_codes(dist, codes, num_classes, min_class_size),
        MetricId::Cs => f_value_cs_codes(dist, codes, num_classes, min_class_size),
        MetricId::Cscf => cscf_codes(dist, codes, num_classes, min_class_size),
        MetricId::Silhouette => silhouette_codes(dist, codes, num_classes).map(|o| o.score),
    }
}

pub fn score(dist: &DistanceMatrix, labels: &LabelSet, id: MetricId, min_class_size: usize) -> Result<f64> {
    score_codes(dist, labels.codes(), labels.num_classes(), id, min_class_size)
}

/// Evaluates every requested metric, returning per-metric outcomes.
pub fn evaluate(
    dist: &DistanceMatrix,
    labels: &LabelSet,
    ids: &[MetricId],
    min_class_size: usize,
) -> Result<(MetricScores, BTreeMap<MetricId, Error>)> {
    evaluate_codes(dist, labels.codes(), labels.num_classes(), ids, min_class_size)
}

pub fn evaluate_codes(
    dist: &DistanceMatrix,
    codes: &[u32],
    num_classes: usize,
    ids: &[MetricId],
    min_class_size: usize,
) -> Result<(MetricScores, BTreeMap<MetricId, Error>)> {
    check_aligned(dist, codes.len())?;
    let mut scores = MetricScores {
        n_evaluable: codes.iter().filter(|&&c| c != INVALID_CLASS).count(),
        ..MetricScores::default()
    };
    let mut errors = BTreeMap::new();

    let k_max = ids
        .iter()
        .filter_map(|id| match id {
            MetricId::PAtK(k) => Some(*k),
            _ => None,
        })
        .max();
    let table = k_max.map(|k| NeighborTable::build(dist, codes, k));

    for &id in ids {
        let outcome = match (id, &table) {
            (MetricId::PAtK(k), Some(Ok(t))) => precision_from_table(t, codes, k),
            (MetricId::PAtK(k), Some(Err(_))) => NeighborTable::build(dist, codes, k)
                .and_then(|t| precision_from_table(&t, codes, k)),
            _ => score_codes(dist, codes, num_classes, id, min_class_size),
        };
        match outcome {
            Ok(v) => scores.set(id, v),
            Err(e) => {
                errors.insert(id, e);
            }
        }
    }
    Ok((scores, errors))
}
