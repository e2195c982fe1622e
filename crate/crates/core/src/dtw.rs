//! Banded multi-dimensional DTW and shortlist re-ranking of a pooled matrix.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::nearest;
use crate::pca::{fit_pca, PcaOptions};
use crate::tensor::{DistanceMatrix, EmbeddingSet, MatrixMetric, SequenceEmbedding};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtwConfig {
    /// Band half-width as a fraction of the longer sequence.
    pub band_radius: f64,
    pub stride: usize,
    pub shortlist_size: usize,
    /// Frame PCA target; 0 keeps the original frame dimension.
    pub pca_dims: usize,
    pub normalize_path: bool,
}

impl Default for DtwConfig {
    fn default() -> Self {
        Self {
            band_radius: 0.1,
            stride: 3,
            shortlist_size: 200,
            pca_dims: 64,
            normalize_path: true,
        }
    }
}

impl DtwConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_radius > 0.0 && self.band_radius <= 1.0) {
            return Err(Error::Parameter(format!(
                "band_radius {} outside (0, 1]",
                self.band_radius
            )));
        }
        if self.stride < 1 {
            return Err(Error::Parameter("stride must be at least 1".into()));
        }
        if self.shortlist_size < 1 {
            return Err(Error::Parameter("shortlist_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// A frame sequence ready for alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSequence {
    frames: Vec<f64>,
    len: usize,
    dim: usize,
}

impl PreparedSequence {
    pub fn new(frames: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || frames.is_empty() || frames.len() % dim != 0 {
            return Err(Error::Parameter(format!(
                "{} values do not form a nonempty sequence of {dim}-dim frames",
                frames.len()
            )));
        }
        Ok(Self {
            len: frames.len() / dim,
            frames,
            dim,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Parameter("ragged frame rows".into()));
        }
        Self::new(rows.concat(), dim)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.frames[i * self.dim..(i + 1) * self.dim]
    }
}

/// Truncates to the valid frames, L2-normalizes each frame, projects with a
/// PCA fitted on all stacked frames, then keeps every `stride`-th frame.
pub fn prepare_sequences(sequences: &[SequenceEmbedding], config: &DtwConfig) -> Result<Vec<PreparedSequence>> {
    config.validate()?;
    let Some(first) = sequences.first() else {
        return Ok(Vec::new());
    };
    let d = first.dim();
    if let Some(bad) = sequences.iter().find(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.dim(),
        });
    }
    let normalized: Vec<Vec<f64>> = sequences
        .iter()
        .map(|s| {
            let mut out = Vec::with_capacity(s.valid_len() * d);
            for t in 0..s.valid_len() {
                let row = s.row(t);
                let norm = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
                let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
                out.extend(row.iter().map(|&x| f64::from(x) * scale));
            }
            out
        })
        .collect();

    let total_frames: usize = normalized.iter().map(|f| f.len() / d).sum();
    let target = config.pca_dims.min(d).min(total_frames.saturating_sub(1));
    let projected: Vec<(Vec<f64>, usize)> = if config.pca_dims == 0 || target == 0 {
        normalized.into_iter().map(|f| (f, d)).collect()
    } else {
        if target < config.pca_dims {
            log::warn!(
                "frame PCA reduced to {target} dims (requested {}, D = {d}, frames = {total_frames})",
                config.pca_dims
            );
        }
        let stacked = EmbeddingSet::new(
            (0..total_frames).map(|i| i.to_string()).collect(),
            normalized.concat(),
            d,
        )?;
        let model = fit_pca(&stacked, target, PcaOptions::default())?;
        normalized
            .into_par_iter()
            .map(|f| (f.chunks_exact(d).flat_map(|r| model.project(r)).collect(), target))
            .collect()
    };

    projected
        .into_iter()
        .map(|(frames, dim)| {
            let kept: Vec<f64> = frames
                .chunks_exact(dim)
                .step_by(config.stride)
                .flatten()
                .copied()
                .collect();
            PreparedSequence::new(kept, dim)
        })
        .collect()
}

/// Result of aligning one ordered pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtwOutcome {
    pub distance: f64,
    /// Accumulated cost along the optimal path.
    pub cost: f64,
    /// Cells on the optimal path.
    pub path_len: usize,
    /// The band had to be widened to connect the corners.
    pub widened: bool,
}

/// Inclusive column range allowed in each row, plus whether any repair was needed.
///
/// The corridor follows the line through both corner cells and has half-width
/// `radius * max(n, m)`. Rows left empty are given the cell nearest that line,
/// and gaps between consecutive rows are bridged.
pub fn band_limits(n: usize, m: usize, radius: f64) -> (Vec<(usize, usize)>, bool) {
    let w = radius * n.max(m) as f64;
    let slope = if n > 1 { (m - 1) as f64 / (n - 1) as f64 } else { 0.0 };
    let mut widened = false;
    let mut limits: Vec<(usize, usize)> = (0..n)
        .map(|i| {
            let center = if n > 1 { i as f64 * slope } else { 0.0 };
            let lo = (center - w).ceil().max(0.0) as usize;
            let hi = ((center + w).floor().max(0.0) as usize).min(m - 1);
            if lo > hi {
                widened = true;
                let c = (center.round() as usize).min(m - 1);
                (c, c)
            } else {
                (lo, hi)
            }
        })
        .collect();
    if limits[0].0 != 0 {
        limits[0].0 = 0;
        widened = true;
    }
    if limits[n - 1].1 != m - 1 {
        limits[n - 1].1 = m - 1;
        widened = true;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        if limits[i].0 > limits[i + 1].0 {
            limits[i].0 = limits[i + 1].0;
            widened = true;
        }
    }
    for i in 0..n.saturating_sub(1) {
        let next_lo = limits[i + 1].0;
        if next_lo > limits[i].1 + 1 {
            limits[i].1 = next_lo - 1;
            widened = true;
        }
    }
    (limits, widened)
}

fn frame_cost(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[inline]
fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// DTW between two prepared sequences with moves {diagonal, down, right}
/// and per-frame Euclidean cost. Among equal-cost paths the shortest wins.
pub fn dtw_distance(a: &PreparedSequence, b: &PreparedSequence, band_radius: f64, normalize_path: bool) -> Result<DtwOutcome> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    if !(band_radius > 0.0 && band_radius <= 1.0) {
        return Err(Error::Parameter(format!("band_radius {band_radius} outside (0, 1]")));
    }
    let (n, m) = (a.len, b.len);
    let (limits, widened) = band_limits(n, m, band_radius);
    const INF: (f64, usize) = (f64::INFINITY, 0);
    let mut prev = vec![INF; m];
    let mut curr = vec![INF; m];
    for (i, &(lo, hi)) in limits.iter().enumerate() {
        curr.iter_mut().for_each(|c| *c = INF);
        let fa = a.frame(i);
        for j in lo..=hi {
            let cost = frame_cost(fa, b.frame(j));
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = INF;
                if i > 0 && j > 0 && better(prev[j - 1], best) {
                    best = prev[j - 1];
                }
                if i > 0 && better(prev[j], best) {
                    best = prev[j];
                }
                if j > 0 && better(curr[j - 1], best) {
                    best = curr[j - 1];
                }
                best
            };
            if best.0.is_finite() {
                curr[j] = (cost + best.0, best.1 + 1);
            }
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    let (cost, path_len) = prev[m - 1];
    debug_assert!(cost.is_finite(), "band must connect the corners");
    Ok(DtwOutcome {
        distance: if normalize_path { cost / path_len as f64 } else { cost },
        cost,
        path_len,
        widened,
    })
}

/// Pooled matrix with DTW values substituted on shortlisted pairs.
#[derive(Debug, Clone)]
pub struct RerankResult {
    /// Pooled distances, replaced by DTW where `in_shortlist`.
    pub matrix: DistanceMatrix,
    /// Row-major `N x N`; symmetric.
    pub in_shortlist: Vec<bool>,
    pub dtw_pairs: usize,
    pub widened_pairs: usize,
}

impl RerankResult {
    /// Distances for scoring: shortlisted pairs keep their DTW value and every
    /// other pair is pushed past the largest shortlisted value, keeping its
    /// pooled order.
    pub fn ranked_matrix(&self) -> DistanceMatrix {
        let n = self.matrix.len();
        let values = self.matrix.values();
        let max_dtw = values
            .iter()
            .zip(&self.in_shortlist)
            .filter(|(_, &s)| s)
            .map(|(&v, _)| v)
            .fold(0f32, f32::max);
        let offset = max_dtw + 1.0;
        let ranked = values
            .iter()
            .zip(&self.in_shortlist)
            .enumerate()
            .map(|(idx, (&v, &s))| if s || idx / n == idx % n { v } else { offset + v })
            .collect();
        DistanceMatrix::from_trusted(ranked, n, MatrixMetric::DtwRerank)
    }
}

/// Re-ranks each row's `shortlist_size` nearest pooled candidates by DTW.
///
/// A pair is aligned if either endpoint shortlists the other; its value is
/// the smaller of the two argument orders.
pub fn dtw_rerank(pooled: &DistanceMatrix, sequences: &[PreparedSequence], config: &DtwConfig) -> Result<RerankResult> {
    config.validate()?;
    let n = pooled.len();
    if sequences.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: sequences.len(),
        });
    }
    let all: Vec<usize> = (0..n).collect();
    let mut in_shortlist = vec![false; n * n];
    if config.shortlist_size >= n - 1 {
        for i in 0..n {
            for j in 0..n {
                in_shortlist[i * n + j] = i != j;
            }
        }
    } else {
        let lists: Vec<Vec<u32>> = all
            .par_iter()
            .map(|&i| nearest(pooled.row(i), &all, i, config.shortlist_size))
            .collect();
        for (i, list) in lists.iter().enumerate() {
            for &j in list {
                let j = j as usize;
                in_shortlist[i * n + j] = true;
                in_shortlist[j * n + i] = true;
            }
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| in_shortlist[i * n + j])
        .collect();
    let aligned: Vec<(f64, bool)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let ab = dtw_distance(&sequences[i], &sequences[j], config.band_radius, config.normalize_path)?;
            let ba = dtw_distance(&sequences[j], &sequences[i], config.band_radius, config.normalize_path)?;
            Ok((ab.distance.min(ba.distance), ab.widened || ba.widened))
        })
        .collect::<Result<_>>()?;

    let mut values = pooled.values().to_vec();
    let mut widened_pairs = 0;
    for (&(i, j), &(d, widened)) in pairs.iter().zip(&aligned) {
        let v = d as f32;
        values[i * n + j] = v;
        values[j * n + i] = v;
        widened_pairs += usize::from(widened);
    }
    if widened_pairs > 0 {
        log::warn!("DTW band widened for {widened_pairs} pairs");
    }
    Ok(RerankResult {
        matrix: DistanceMatrix::from_trusted(values, n, MatrixMetric::DtwRerank),
        in_shortlist,
        dtw_pairs: pairs.len(),
        widened_pairs,
    })
}
