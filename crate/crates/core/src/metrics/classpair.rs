use rayon::prelude::*;

use super::{check_aligned, restrict_codes};
use crate::error::{Error, Result};
use crate::stats::{KahanSum, EPS};
use crate::tensor::{DistanceMatrix, LabelSet, INVALID_CLASS};

/// Mean intra- and inter-class distances for the classes that passed the
/// size filter, indexed `0..m` in original class-code order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPairStats {
    /// Original class code of each retained class.
    pub classes: Vec<u32>,
    pub avg_intra: Vec<f64>,
    /// Row-major `m x m`; the diagonal repeats `avg_intra`.
    pub avg_inter: Vec<f64>,
}

impl ClassPairStats {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn inter(&self, a: usize, b: usize) -> f64 {
        self.avg_inter[a * self.classes.len() + b]
    }
}

pub(crate) fn class_pair_stats_codes(
    dist: &DistanceMatrix,
    codes: &[u32],
    num_classes: usize,
    min_class_size: usize,
) -> Result<ClassPairStats> {
    check_aligned(dist, codes.len())?;
    let restricted = restrict_codes(codes, num_classes, min_class_size.max(2));
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &c) in restricted.iter().enumerate() {
        if c != INVALID_CLASS {
            members[c as usize].push(i);
        }
    }
    let classes: Vec<u32> = (0..num_classes as u32).filter(|&c| !members[c as usize].is_empty()).collect();
    let m = classes.len();
    if m < 2 {
        return Err(Error::Degenerate(format!(
            "class-pair scores need two classes with at least {} members, found {m}",
            min_class_size.max(2)
        )));
    }
    let mut slot = vec![usize::MAX; num_classes];
    for (s, &c) in classes.iter().enumerate() {
        slot[c as usize] = s;
    }

    let members = &members;
    let classes_ref = &classes;
    let avg_inter: Vec<f64> = classes
        .par_iter()
        .flat_map_iter(|&ca| {
            let mut sums = vec![KahanSum::new(); m];
            for &i in &members[ca as usize] {
                for (&d, &c) in dist.row(i).iter().zip(&restricted) {
                    if c != INVALID_CLASS {
                        sums[slot[c as usize]].add(f64::from(d));
                    }
                }
            }
            let na = members[ca as usize].len() as f64;
            classes_ref.iter().enumerate().map(move |(b, &cb)| {
                let nb = members[cb as usize].len() as f64;
                let pairs = if cb == ca { na * (na - 1.0) } else { na * nb };
                sums[b].total() / pairs
            })
        })
        .collect();
    let avg_intra = (0..m).map(|a| avg_inter[a * m + a]).collect();
    Ok(ClassPairStats {
        classes,
        avg_intra,
        avg_inter,
    })
}

/// Intra/inter class means for classes with at least `min_class_size` (and at
/// least two) members.
pub fn class_pair_stats(dist: &DistanceMatrix, labels: &LabelSet, min_class_size: usize) -> Result<ClassPairStats> {
    class_pair_stats_codes(dist, labels.codes(), labels.num_classes(), min_class_size)
}

fn mean_over_ordered_pairs(stats: &ClassPairStats, f: impl Fn(usize, usize) -> f64) -> f64 {
    let m = stats.len();
    let mut sum = KahanSum::new();
    for a in 0..m {
        for b in (0..m).filter(|&b| b != a) {
            sum.add(f(a, b));
        }
    }
    sum.total() / (m * (m - 1)) as f64
}

pub fn f_value_cs_codes(dist: &DistanceMatrix, codes: &[u32], num_classes: usize, min_class_size: usize) -> Result<f64> {
    let stats = class_pair_stats_codes(dist, codes, num_classes, min_class_size)?;
    Ok(mean_over_ordered_pairs(&stats, |a, b| {
        let s = stats.inter(a, b) / (stats.avg_intra[a] + EPS);
        s / (1.0 + s)
    }))
}

/// Mean transformed inter/intra ratio over ordered class pairs, in `[0, 1]`.
pub fn f_value_cs(dist: &DistanceMatrix, labels: &LabelSet, min_class_size: usize) -> Result<f64> {
    f_value_cs_codes(dist, labels.codes(), labels.num_classes(), min_class_size)
}

pub fn cscf_codes(dist: &DistanceMatrix, codes: &[u32], num_classes: usize, min_class_size: usize) -> Result<f64> {
    let stats = class_pair_stats_codes(dist, codes, num_classes, min_class_size)?;
    let m = stats.len();
    let confused = (0..m)
        .flat_map(|a| (0..m).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && stats.inter(a, b) < stats.avg_intra[a])
        .count();
    Ok(confused as f64 / (m * (m - 1)) as f64)
}

/// Fraction of ordered class pairs whose mean inter-class distance is below
/// the anchor's mean intra-class distance. Lower is better.
pub fn cscf(dist: &DistanceMatrix, labels: &LabelSet, min_class_size: usize) -> Result<f64> {
    cscf_codes(dist, labels.codes(), labels.num_classes(), min_class_size)
}
