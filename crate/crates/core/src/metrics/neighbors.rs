use std::collections::BTreeMap;

use rayon::prelude::*;

use super::check_aligned;
use crate::error::{Error, Result};
use crate::tensor::{DistanceMatrix, LabelSet, INVALID_CLASS};

/// The `k` nearest labeled neighbors of every labeled row.
///
/// Ties in distance go to the lower index. The table depends only on which
/// rows are labeled, so it stays valid when labels are shuffled among the
/// labeled rows.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    k: usize,
    rows: Vec<usize>,
    neighbors: Vec<u32>,
}

impl NeighborTable {
    pub fn build(dist: &DistanceMatrix, codes: &[u32], k: usize) -> Result<Self> {
        check_aligned(dist, codes.len())?;
        let rows: Vec<usize> = (0..codes.len()).filter(|&i| codes[i] != INVALID_CLASS).collect();
        let n_eval = rows.len();
        if k == 0 || k >= n_eval {
            return Err(Error::Parameter(format!(
                "k = {k} must satisfy 1 <= k <= N_evaluable - 1 = {}",
                n_eval.saturating_sub(1)
            )));
        }
        let neighbors: Vec<u32> = rows
            .par_iter()
            .flat_map_iter(|&i| nearest(dist.row(i), &rows, i, k))
            .collect();
        Ok(Self { k, rows, neighbors })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Row indices that were evaluated, ascending.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Neighbors of the `e`-th evaluated row, nearest first.
    pub fn neighbors(&self, e: usize) -> &[u32] {
        &self.neighbors[e * self.k..(e + 1) * self.k]
    }
}

pub(crate) fn nearest(row: &[f32], candidates: &[usize], self_idx: usize, k: usize) -> Vec<u32> {
    let mut best: Vec<(f32, u32)> = Vec::with_capacity(k + 1);
    for &j in candidates {
        if j == self_idx {
            continue;
        }
        let d = row[j];
        if best.len() == k {
            if d >= best[k - 1].0 {
                continue;
            }
            best.pop();
        }
        // Candidates arrive in ascending index order, so an equal distance
        // already in the buffer keeps precedence.
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, j as u32));
    }
    best.into_iter().map(|(_, j)| j).collect()
}

/// Precision at `k` using a prebuilt table with `table.k() >= k`.
pub fn precision_from_table(table: &NeighborTable, codes: &[u32], k: usize) -> Result<f64> {
    if k == 0 || k > table.k {
        return Err(Error::Parameter(format!(
            "k = {k} exceeds neighbor table depth {}",
            table.k
        )));
    }
    let mut correct: u64 = 0;
    for (e, &i) in table.rows.iter().enumerate() {
        let ci = codes[i];
        correct += table.neighbors(e)[..k]
            .iter()
            .filter(|&&j| codes[j as usize] == ci)
            .count() as u64;
    }
    Ok(correct as f64 / (table.rows.len() as f64 * k as f64))
}

/// Fraction of same-class items among each labeled item's `k` nearest
/// labeled neighbors, pooled over items.
pub fn precision_at_k(dist: &DistanceMatrix, labels: &LabelSet, ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let Some(&k_max) = ks.iter().max() else {
        return Ok(BTreeMap::new());
    };
    let table = NeighborTable::build(dist, labels.codes(), k_max)?;
    if let Some(&k) = ks.iter().find(|&&k| k == 0) {
        return Err(Error::Parameter(format!("k = {k} must be at least 1")));
    }
    ks.iter()
        .map(|&k| Ok((k, precision_from_table(&table, labels.codes(), k)?)))
        .collect()
}
