#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use embedgeom::tensor::{write_tensor_file, DatasetManifest, ManifestItem, TensorHeader};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw by Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `classes x per_class` points: unit-variance class centers scaled by
/// `separation`, plus isotropic noise of scale `spread`.
pub fn blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<String>) {
    let mut r = rng(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| separation * normal(&mut r)).collect())
        .collect();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            points.push(center.iter().map(|&m| m + spread * normal(&mut r)).collect());
            labels.push(format!("class{c}"));
        }
    }
    (points, labels)
}

pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub spread: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            per_class: 6,
            dim: 8,
            min_frames: 6,
            max_frames: 12,
            spread: 0.6,
            seed: 11,
        }
    }
}

/// Writes one tensor file per clip plus `manifest.csv` into `dir`. Each clip
/// is a noisy trajectory that drifts along its class's direction.
pub fn write_sequence_dataset(dir: &Path, spec: &SyntheticSpec) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let mut r = rng(spec.seed);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..spec.dim).map(|_| 2.0 * normal(&mut r)).collect())
        .collect();
    let mut items = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for k in 0..spec.per_class {
            let t = r.random_range(spec.min_frames..=spec.max_frames);
            let mut frames = Vec::with_capacity(t * spec.dim);
            for step in 0..t {
                let phase = step as f64 / t as f64;
                for &m in center {
                    frames.push((m * (0.5 + phase) + spec.spread * normal(&mut r)) as f32);
                }
            }
            let clip_id = format!("c{c}_{k}");
            let file = format!("{clip_id}.bin");
            write_tensor_file(&dir.join(&file), &TensorHeader::sequence(t, spec.dim, t), &frames).unwrap();
            items.push(ManifestItem {
                clip_id,
                label: format!("class{c}"),
                duration_seconds: 0.02 * t as f64,
                embedding_path: PathBuf::from(file),
            });
        }
    }
    let path = dir.join("manifest.csv");
    DatasetManifest::new("synthetic", items).write_csv(&path).unwrap();
    path
}

pub fn write_file(path: &Path, text: &str) -> PathBuf {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).unwrap();
    }
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

/// One randomized metric-comparison case. Grid coordinates make tied
/// distances common.
#[derive(Debug, Clone)]
pub struct Instance {
    pub points: Vec<Vec<f64>>,
    pub labels: oracle::Labels,
    pub min_class_size: usize,
    pub k: usize,
    pub assignments: Vec<i64>,
    pub clusters: usize,
}

pub fn random_instance(r: &mut ChaCha8Rng) -> Instance {
    let n = r.random_range(4..=50usize);
    let dim = r.random_range(1..=16usize);
    let classes = r.random_range(1..=6usize);
    let clusters = r.random_range(1..=6usize);
    Instance {
        points: (0..n)
            .map(|_| (0..dim).map(|_| r.random_range(0..4i32) as f64).collect())
            .collect(),
        labels: (0..n)
            .map(|_| (r.random::<f64>() >= 0.15).then(|| r.random_range(0..classes)))
            .collect(),
        min_class_size: r.random_range(1..=5usize),
        k: r.random_range(1..=6usize),
        assignments: (0..n).map(|_| r.random_range(-1..clusters as i64)).collect(),
        clusters,
    }
}

fn agree<E: std::fmt::Debug>(name: &str, got: Result<f64, E>, want: Option<f64>, tol: f64) -> Result<(), String> {
    match (got, want) {
        (Ok(g), Some(w)) if (g - w).abs() <= tol => Ok(()),
        (Err(_), None) => Ok(()),
        (got, want) => Err(format!("{name}: library {got:?}, reference {want:?}")),
    }
}

/// Compares every distance-based score and every clustering score with the
/// naive reference implementations.
pub fn check_instance(inst: &Instance, tol: f64) -> Result<(), String> {
    use embedgeom::clustering::{clustering_scores, weighted_purity, ClusterAssignment};
    use embedgeom::metrics::{self, MetricId};
    use embedgeom::tensor::{DistanceMatrix, LabelSet, MatrixMetric};

    let n = inst.points.len();
    let euclid = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let dist = DistanceMatrix::from_fn(n, MatrixMetric::Euclidean, |i, j| euclid(&inst.points[i], &inst.points[j]))
        .map_err(|e| e.to_string())?;
    let d: oracle::Dist = (0..n).map(|i| (0..n).map(|j| dist.get(i, j)).collect()).collect();
    let labels = LabelSet::new(
        inst.labels
            .iter()
            .map(|l| l.map(|c| format!("class{c}")).unwrap_or_default()),
    );
    let min = inst.min_class_size;
    let y = &inst.labels;

    for k in [1, 5, inst.k] {
        agree(
            &format!("p@{k}"),
            metrics::score(&dist, &labels, MetricId::PAtK(k), min),
            oracle::precision_at_k(&d, y, k),
            tol,
        )?;
    }
    agree("gsr", metrics::score(&dist, &labels, MetricId::Gsr, min), oracle::gsr(&d, y, min), tol)?;
    agree("csr", metrics::score(&dist, &labels, MetricId::Csr, min), oracle::csr(&d, y, min), tol)?;
    agree("cs", metrics::score(&dist, &labels, MetricId::Cs, min), oracle::cs(&d, y, min), tol)?;
    agree("cscf", metrics::score(&dist, &labels, MetricId::Cscf, min), oracle::cscf(&d, y, min), tol)?;
    agree(
        "silhouette",
        metrics::score(&dist, &labels, MetricId::Silhouette, min),
        oracle::silhouette(&d, y),
        tol,
    )?;

    let assign = ClusterAssignment::new(inst.assignments.clone(), inst.clusters).map_err(|e| e.to_string())?;
    let want = oracle::clustering(&inst.assignments, y);
    let got = clustering_scores(&assign, &labels);
    agree("nmi", got.as_ref().map(|s| s.nmi), want.map(|w| w.0), tol)?;
    agree("purity", got.as_ref().map(|s| s.purity), want.map(|w| w.1), tol)?;
    agree("ari", got.as_ref().map(|s| s.ari), want.map(|w| w.2), tol)?;
    agree("weighted_purity", weighted_purity(&assign, &labels), want.map(|w| w.3), tol)?;
    Ok(())
}
