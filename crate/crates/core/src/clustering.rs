//! k-means and partition-agreement scores.

use std::collections::BTreeMap;
use std::path::Path;

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::substream;
use crate::error::{Error, Result};
use crate::tensor::{EmbeddingSet, IdIndex, LabelSet, INVALID_CLASS};

/// Cluster id given to noise points by external clusterers.
pub const NOISE: i64 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    assignments: Vec<i64>,
    k: usize,
}

impl ClusterAssignment {
    pub fn new(assignments: Vec<i64>, k: usize) -> Result<Self> {
        if let Some(bad) = assignments.iter().find(|&&a| a < NOISE || a >= k as i64) {
            return Err(Error::Parameter(format!("cluster id {bad} outside [-1, {k})")));
        }
        Ok(Self { assignments, k })
    }

    pub fn assignments(&self) -> &[i64] {
        &self.assignments
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentRow {
    clip_id: String,
    cluster_id: i64,
}

pub fn write_assignments_csv(path: &Path, ids: &[String], assign: &ClusterAssignment) -> Result<()> {
    if ids.len() != assign.len() {
        return Err(Error::DimensionMismatch {
            expected: assign.len(),
            found: ids.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    for (id, &c) in ids.iter().zip(&assign.assignments) {
        w.serialize(AssignmentRow {
            clip_id: id.clone(),
            cluster_id: c,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `clip_id,cluster_id` rows. `k` is one more than the largest id.
pub fn read_assignments_csv(path: &Path) -> Result<(Vec<String>, ClusterAssignment)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut ids = Vec::new();
    let mut assignments = Vec::new();
    for row in r.deserialize::<AssignmentRow>() {
        let row = row?;
        ids.push(row.clip_id);
        assignments.push(row.cluster_id);
    }
    let k = assignments.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    Ok((ids, ClusterAssignment::new(assignments, k)?))
}

/// Reorders an imported assignment to match `ids`.
pub fn align_assignments(
    imported_ids: &[String],
    assign: &ClusterAssignment,
    ids: &[String],
) -> Result<ClusterAssignment> {
    let index = IdIndex::new(imported_ids);
    let assignments = ids
        .iter()
        .map(|id| {
            index
                .get(id)
                .map(|i| assign.assignments[i])
                .ok_or_else(|| Error::Parameter(format!("clip `{id}` missing from assignment file")))
        })
        .collect::<Result<Vec<_>>>()?;
    ClusterAssignment::new(assignments, assign.k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: ClusterAssignment,
    /// Row-major `k x D`.
    pub centroids: Vec<f64>,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Empty clusters that were re-seeded.
    pub reseeded: usize,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().expect("at least one iteration")
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(row: &[f64], centroids: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(d).enumerate() {
        let dist = sq_dist(row, centroid);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

fn init_plus_plus(set: &EmbeddingSet, k: usize, seed: u64) -> Vec<f64> {
    let n = set.len();
    let d = set.dim();
    let mut rng = substream(seed, 0);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = set.row(first).to_vec();
    let mut d2: Vec<f64> = set.rows().map(|r| sq_dist(r, set.row(first))).collect();
    while centroids.len() < k * d {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total")
        } else {
            (0..n).find(|&i| !chosen[i]).expect("k <= n")
        };
        chosen[pick] = true;
        let row = set.row(pick);
        centroids.extend_from_slice(row);
        for (w, r) in d2.iter_mut().zip(set.rows()) {
            *w = w.min(sq_dist(r, row));
        }
    }
    centroids
}

/// Lloyd's algorithm from a seeded k-means++ start.
///
/// A cluster that loses all members is re-seeded at the point furthest from
/// its current centroid (lowest index on ties).
pub fn kmeans(set: &EmbeddingSet, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let n = set.len();
    let d = set.dim();
    if k < 2 || k > n {
        return Err(Error::Parameter(format!("k = {k} must satisfy 2 <= k <= N = {n}")));
    }
    if max_iter == 0 {
        return Err(Error::Parameter("max_iter must be at least 1".into()));
    }
    let mut centroids = init_plus_plus(set, k, seed);
    let mut assign: Vec<usize> = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut reseeded = 0;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let step: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest_centroid(set.row(i), &centroids, d))
            .collect();
        let mut changed = false;
        for (slot, &(c, _)) in assign.iter_mut().zip(&step) {
            changed |= *slot != c;
            *slot = c;
        }
        let mut point_cost: Vec<f64> = step.iter().map(|&(_, cost)| cost).collect();

        let mut counts = vec![0usize; k];
        assign.iter().for_each(|&c| counts[c] += 1);
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assign[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if point_cost[b] >= point_cost[i] => Some(b),
                    _ => Some(i),
                });
            let Some(far) = far else { break };
            counts[assign[far]] -= 1;
            counts[c] = 1;
            assign[far] = c;
            point_cost[far] = 0.0;
            centroids[c * d..(c + 1) * d].copy_from_slice(set.row(far));
            reseeded += 1;
            changed = true;
        }
        history.push(point_cost.iter().sum());

        if !changed && iterations > 1 {
            converged = true;
            break;
        }
        let mut sums = vec![0.0f64; k * d];
        for (i, &c) in assign.iter().enumerate() {
            for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(set.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            for (dst, s) in centroids[c * d..(c + 1) * d].iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                *dst = s * inv;
            }
        }
    }
    Ok(KMeansResult {
        assignment: ClusterAssignment::new(assign.iter().map(|&c| c as i64).collect(), k)?,
        centroids,
        inertia_history: history,
        iterations,
        converged,
        reseeded,
    })
}

/// Agreement between a clustering and the ground-truth classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteringScores {
    pub nmi: f64,
    pub purity: f64,
    pub ari: f64,
    /// Both partitions have a single block, so NMI was set to 1 by convention.
    pub nmi_degenerate: bool,
    /// Rows that are labeled and not noise.
    pub n_scored: usize,
}

struct Contingency {
    /// `(cluster, class) -> count`
    cells: BTreeMap<(i64, u32), u64>,
    cluster_sizes: BTreeMap<i64, u64>,
    class_sizes: BTreeMap<u32, u64>,
    n: u64,
}

fn contingency(assign: &ClusterAssignment, labels: &LabelSet) -> Result<Contingency> {
    if assign.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: assign.len(),
        });
    }
    let mut t = Contingency {
        cells: BTreeMap::new(),
        cluster_sizes: BTreeMap::new(),
        class_sizes: BTreeMap::new(),
        n: 0,
    };
    for (&c, &y) in assign.assignments.iter().zip(labels.codes()) {
        if c == NOISE || y == INVALID_CLASS {
            continue;
        }
        *t.cells.entry((c, y)).or_default() += 1;
        *t.cluster_sizes.entry(c).or_default() += 1;
        *t.class_sizes.entry(y).or_default() += 1;
        t.n += 1;
    }
    if t.n == 0 {
        return Err(Error::Degenerate("no labeled non-noise rows to score".into()));
    }
    Ok(t)
}

fn entropy(sizes: impl Iterator<Item = u64>, n: f64) -> f64 {
    -sizes
        .map(|s| {
            let p = s as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

fn pairs(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

fn majority_sum(t: &Contingency) -> u64 {
    let mut best: BTreeMap<i64, u64> = BTreeMap::new();
    for (&(c, _), &count) in &t.cells {
        let slot = best.entry(c).or_default();
        *slot = (*slot).max(count);
    }
    best.values().sum()
}

/// NMI (geometric normalization, natural log), purity and ARI over labeled,
/// non-noise rows.
pub fn clustering_scores(assign: &ClusterAssignment, labels: &LabelSet) -> Result<ClusteringScores> {
    let t = contingency(assign, labels)?;
    let n = t.n as f64;

    let hu = entropy(t.cluster_sizes.values().copied(), n);
    let hv = entropy(t.class_sizes.values().copied(), n);
    let mi: f64 = t
        .cells
        .iter()
        .map(|(&(c, y), &count)| {
            let p = count as f64 / n;
            let pu = t.cluster_sizes[&c] as f64 / n;
            let pv = t.class_sizes[&y] as f64 / n;
            p * (p / (pu * pv)).ln()
        })
        .sum();
    let both_trivial = t.cluster_sizes.len() == 1 && t.class_sizes.len() == 1;
    let nmi = if both_trivial {
        1.0
    } else if hu == 0.0 || hv == 0.0 {
        0.0
    } else {
        (mi / (hu * hv).sqrt()).clamp(0.0, 1.0)
    };

    let index: f64 = t.cells.values().map(|&c| pairs(c)).sum();
    let a: f64 = t.cluster_sizes.values().map(|&c| pairs(c)).sum();
    let b: f64 = t.class_sizes.values().map(|&c| pairs(c)).sum();
    let expected = a * b / pairs(t.n).max(f64::MIN_POSITIVE);
    let max_index = 0.5 * (a + b);
    let ari = if max_index == expected {
        1.0
    } else {
        (index - expected) / (max_index - expected)
    };

    Ok(ClusteringScores {
        nmi,
        purity: majority_sum(&t) as f64 / n,
        ari,
        nmi_degenerate: both_trivial,
        n_scored: t.n as usize,
    })
}

/// Size-weighted mean of per-cluster majority fractions, noise excluded.
pub fn weighted_purity(assign: &ClusterAssignment, labels: &LabelSet) -> Result<f64> {
    let t = contingency(assign, labels)
        .map_err(|_| Error::Degenerate("weighted purity needs at least one non-noise cluster".into()))?;
    let weighted: f64 = t
        .cluster_sizes
        .iter()
        .map(|(&c, &size)| {
            let majority = t
                .cells
                .range((c, 0)..=(c, u32::MAX))
                .map(|(_, &v)| v)
                .max()
                .unwrap_or(0);
            size as f64 * (majority as f64 / size as f64)
        })
        .sum();
    Ok(weighted / t.n as f64)
}
