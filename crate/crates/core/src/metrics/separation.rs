use rayon::prelude::*;

use super::{check_aligned, distinct_classes, restrict_codes};
use crate::error::{Error, Result};
use crate::stats::{KahanSum, EPS};
use crate::tensor::{DistanceMatrix, LabelSet, INVALID_CLASS};

/// Distances from one point to its own class and to the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSeparation {
    /// Mean distance to the other members of the point's class.
    pub avg_id: f64,
    /// Distance to the nearest point of any other class.
    pub nid: f64,
    /// Distance to the furthest member of the point's class.
    pub mid: f64,
    /// `(nid - avg_id) / (nid + avg_id + EPS)`.
    pub local_score: f64,
}

impl PointSeparation {
    pub fn local_csr(&self) -> f64 {
        (self.nid - self.mid) / (self.nid + self.mid + EPS)
    }
}

fn scan_row(row: &[f32], codes: &[u32], i: usize) -> PointSeparation {
    let ci = codes[i];
    let mut sum = 0.0f64;
    let mut count = 0u32;
    let mut mid = 0.0f32;
    let mut nid = f32::INFINITY;
    for (j, (&d, &c)) in row.iter().zip(codes).enumerate() {
        if c == ci {
            if j != i {
                sum += f64::from(d);
                count += 1;
                mid = mid.max(d);
            }
        } else if c != INVALID_CLASS {
            nid = nid.min(d);
        }
    }
    let avg_id = sum / f64::from(count);
    let nid = f64::from(nid);
    PointSeparation {
        avg_id,
        nid,
        mid: f64::from(mid),
        local_score: (nid - avg_id) / (nid + avg_id + EPS),
    }
}

/// Evaluable rows after filtering, or the reason there are none worth scoring.
fn evaluable(dist: &DistanceMatrix, codes: &[u32], num_classes: usize, min_class_size: usize) -> Result<Vec<u32>> {
    check_aligned(dist, codes.len())?;
    let restricted = restrict_codes(codes, num_classes, min_class_size.max(2));
    match distinct_classes(&restricted, num_classes) {
        0 => Err(Error::Degenerate(format!(
            "no class has at least {} labeled members",
            min_class_size.max(2)
        ))),
        1 => Err(Error::Degenerate(
            "only one evaluable class; the nearest inter-class distance is undefined".into(),
        )),
        _ => Ok(restricted),
    }
}

/// The `width` nearest other rows of every row, nearest first.
#[derive(Debug, Clone)]
pub struct NearestPrefix {
    width: usize,
    indices: Vec<u32>,
}

impl NearestPrefix {
    pub const DEFAULT_WIDTH: usize = 32;

    pub fn build(dist: &DistanceMatrix, width: usize) -> Self {
        let n = dist.len();
        let width = width.min(n.saturating_sub(1));
        let mut indices = vec![0u32; n * width];
        if width > 0 {
            indices.par_chunks_mut(width).enumerate().for_each(|(i, out)| {
                let row = dist.row(i);
                let mut cand: Vec<(f32, u32)> =
                    (0..n).filter(|&j| j != i).map(|j| (row[j], j as u32)).collect();
                let by_distance = |a: &(f32, u32), b: &(f32, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if width < cand.len() {
                    cand.select_nth_unstable_by(width - 1, by_distance);
                    cand.truncate(width);
                }
                cand.sort_unstable_by(by_distance);
                for (slot, (_, j)) in out.iter_mut().zip(cand) {
                    *slot = j;
                }
            });
        }
        Self { width, indices }
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.indices[i * self.width..(i + 1) * self.width]
    }
}

/// Same result as [`scan_row`], reading only class members and a neighbor prefix.
fn scan_members(row: &[f32], codes: &[u32], i: usize, members: &[u32], prefix: &[u32]) -> PointSeparation {
    let ci = codes[i];
    let mut sum = 0.0f64;
    let mut count = 0u32;
    let mut mid = 0.0f32;
    for &j in members {
        if j as usize != i {
            let d = row[j as usize];
            sum += f64::from(d);
            count += 1;
            mid = mid.max(d);
        }
    }
    let nid = match prefix.iter().find(|&&j| {
        let c = codes[j as usize];
        c != ci && c != INVALID_CLASS
    }) {
        Some(&j) => row[j as usize],
        None => row
            .iter()
            .zip(codes)
            .filter(|&(_, &c)| c != ci && c != INVALID_CLASS)
            .map(|(&d, _)| d)
            .fold(f32::INFINITY, f32::min),
    };
    let avg_id = sum / f64::from(count);
    let nid = f64::from(nid);
    PointSeparation {
        avg_id,
        nid,
        mid: f64::from(mid),
        local_score: (nid - avg_id) / (nid + avg_id + EPS),
    }
}

fn separations(
    dist: &DistanceMatrix,
    restricted: &[u32],
    prefix: Option<&NearestPrefix>,
) -> Vec<(usize, PointSeparation)> {
    let rows = (0..restricted.len())
        .into_par_iter()
        .filter(|&i| restricted[i] != INVALID_CLASS);
    match prefix {
        None => rows.map(|i| (i, scan_row(dist.row(i), restricted, i))).collect(),
        Some(prefix) => {
            let mut members: Vec<Vec<u32>> = Vec::new();
            for (i, &c) in restricted.iter().enumerate() {
                if c != INVALID_CLASS {
                    if members.len() <= c as usize {
                        members.resize_with(c as usize + 1, Vec::new);
                    }
                    members[c as usize].push(i as u32);
                }
            }
            rows.map(|i| {
                let own = &members[restricted[i] as usize];
                (i, scan_members(dist.row(i), restricted, i, own, prefix.row(i)))
            })
            .collect()
        }
    }
}

/// Per-row separation statistics; `None` for rows that are not evaluable.
pub fn point_separations(
    dist: &DistanceMatrix,
    labels: &LabelSet,
    min_class_size: usize,
) -> Result<Vec<Option<PointSeparation>>> {
    let restricted = evaluable(dist, labels.codes(), labels.num_classes(), min_class_size)?;
    let mut out = vec![None; restricted.len()];
    for (i, s) in separations(dist, &restricted, None) {
        out[i] = Some(s);
    }
    Ok(out)
}

pub fn gsr_codes(dist: &DistanceMatrix, codes: &[u32], num_classes: usize, min_class_size: usize) -> Result<f64> {
    gsr_with(dist, codes, num_classes, min_class_size, None)
}

/// GSR using a precomputed [`NearestPrefix`] when one is given.
pub fn gsr_with(
    dist: &DistanceMatrix,
    codes: &[u32],
    num_classes: usize,
    min_class_size: usize,
    prefix: Option<&NearestPrefix>,
) -> Result<f64> {
    let restricted = evaluable(dist, codes, num_classes, min_class_size)?;
    let points = separations(dist, &restricted, prefix);
    let mut sum = KahanSum::new();
    for (_, p) in &points {
        sum.add(p.local_score);
    }
    Ok(100.0 * 0.5 * (sum.total() / points.len() as f64 + 1.0))
}

/// Global separation rate, as a percentage in `[0, 100]`.
pub fn gsr(dist: &DistanceMatrix, labels: &LabelSet, min_class_size: usize) -> Result<f64> {
    gsr_codes(dist, labels.codes(), labels.num_classes(), min_class_size)
}

pub fn csr_codes(dist: &DistanceMatrix, codes: &[u32], num_classes: usize, min_class_size: usize) -> Result<f64> {
    csr_with(dist, codes, num_classes, min_class_size, None)
}

/// CSR using a precomputed [`NearestPrefix`] when one is given.
pub fn csr_with(
    dist: &DistanceMatrix,
    codes: &[u32],
    num_classes: usize,
    min_class_size: usize,
    prefix: Option<&NearestPrefix>,
) -> Result<f64> {
    let restricted = evaluable(dist, codes, num_classes, min_class_size)?;
    let points = separations(dist, &restricted, prefix);
    let mut per_class = vec![(KahanSum::new(), 0usize); num_classes];
    for (i, p) in &points {
        let slot = &mut per_class[restricted[*i] as usize];
        slot.0.add(p.local_csr());
        slot.1 += 1;
    }
    let mut weighted = KahanSum::new();
    for (sum, size) in per_class.iter().filter(|(_, s)| *s > 0) {
        weighted.add(*size as f64 * (sum.total() / *size as f64));
    }
    Ok(0.5 * (weighted.total() / points.len() as f64 + 1.0))
}

/// Class separation ratio in `[0, 1]`.
pub fn csr(dist: &DistanceMatrix, labels: &LabelSet, min_class_size: usize) -> Result<f64> {
    csr_codes(dist, labels.codes(), labels.num_classes(), min_class_size)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilhouetteOutcome {
    pub score: f64,
    /// Points given `s = 0` because their class is a singleton or both
    /// cohesion and separation are zero.
    pub flagged_points: usize,
    pub n_points: usize,
}

pub fn silhouette_codes(dist: &DistanceMatrix, codes: &[u32], num_classes: usize) -> Result<SilhouetteOutcome> {
    check_aligned(dist, codes.len())?;
    if distinct_classes(codes, num_classes) < 2 {
        return Err(Error::Degenerate("silhouette needs at least two labeled classes".into()));
    }
    let mut sizes = vec![0usize; num_classes];
    for &c in codes.iter().filter(|&&c| c != INVALID_CLASS) {
        sizes[c as usize] += 1;
    }
    let values: Vec<Option<f64>> = (0..codes.len())
        .into_par_iter()
        .filter(|&i| codes[i] != INVALID_CLASS)
        .map_init(
            || vec![0.0f64; num_classes],
            |sums, i| {
                sums.iter_mut().for_each(|s| *s = 0.0);
                for (&d, &c) in dist.row(i).iter().zip(codes) {
                    if c != INVALID_CLASS {
                        sums[c as usize] += f64::from(d);
                    }
                }
                let own = codes[i] as usize;
                if sizes[own] < 2 {
                    return None;
                }
                let a = sums[own] / (sizes[own] - 1) as f64;
                let b = (0..num_classes)
                    .filter(|&c| c != own && sizes[c] > 0)
                    .map(|c| sums[c] / sizes[c] as f64)
                    .fold(f64::INFINITY, f64::min);
                let denom = a.max(b);
                (denom > 0.0).then(|| (b - a) / denom)
            },
        )
        .collect();
    let mut sum = KahanSum::new();
    let mut flagged = 0;
    for v in &values {
        match v {
            Some(s) => sum.add(*s),
            None => flagged += 1,
        }
    }
    if flagged > 0 {
        log::debug!("silhouette: {flagged} points set to 0");
    }
    Ok(SilhouetteOutcome {
        score: sum.total() / values.len() as f64,
        flagged_points: flagged,
        n_points: values.len(),
    })
}

pub fn silhouette_detailed(dist: &DistanceMatrix, labels: &LabelSet) -> Result<SilhouetteOutcome> {
    silhouette_codes(dist, labels.codes(), labels.num_classes())
}

/// Mean silhouette of the ground-truth classes, in `[-1, 1]`.
pub fn silhouette(dist: &DistanceMatrix, labels: &LabelSet) -> Result<f64> {
    silhouette_detailed(dist, labels).map(|o| o.score)
}
