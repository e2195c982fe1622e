//! Label-free PCA fitted on the evaluated subset itself.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::EmbeddingSet;

/// Inputs wider than this use the iterative top-k solver.
pub const EXACT_SOLVER_MAX_DIM: usize = 2048;
const ITERATIVE_TOL: f64 = 1e-9;
const ITERATIVE_MAX_ITERS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaOptions {
    /// Scale each projected component to unit variance.
    pub whiten: bool,
    pub exact_max_dim: usize,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            whiten: false,
            exact_max_dim: EXACT_SOLVER_MAX_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `target_dims x D`, row-major; rows orthonormal.
    pub components: Vec<f64>,
    pub explained_variance: Vec<f64>,
    pub input_dim: usize,
    pub whiten: bool,
    /// Zero total variance.
    pub degenerate: bool,
    /// More components requested than the centered rank; the surplus carry
    /// zero variance.
    pub rank_deficient: bool,
}

impl PcaModel {
    pub fn target_dims(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k * self.input_dim..(k + 1) * self.input_dim]
    }

    fn project_row(&self, row: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let comp = self.component(k);
            let mut acc = 0.0;
            for ((&x, &m), &c) in row.iter().zip(&self.mean).zip(comp) {
                acc += (x - m) * c;
            }
            if self.whiten {
                let var = self.explained_variance[k];
                acc = if var > 0.0 { acc / var.sqrt() } else { 0.0 };
            }
            *o = acc;
        }
    }

    /// Projects one input row.
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.target_dims()];
        self.project_row(row, &mut out);
        out
    }

    /// Maps projected coordinates back to input space (ignores whitening).
    pub fn inverse_row(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (k, &zk) in z.iter().enumerate() {
            let zk = if self.whiten {
                zk * self.explained_variance[k].sqrt()
            } else {
                zk
            };
            for (o, &c) in out.iter_mut().zip(self.component(k)) {
                *o += zk * c;
            }
        }
        out
    }
}

/// Sample covariance (divisor `N - 1`) of the centered data.
fn covariance(set: &EmbeddingSet, mean: &[f64]) -> DMatrix<f64> {
    let (n, d) = (set.len(), set.dim());
    let centered = DMatrix::from_fn(n, d, |i, j| set.row(i)[j] - mean[j]);
    let mut cov = centered.transpose() * &centered;
    cov /= (n - 1) as f64;
    // exact symmetry
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

/// Largest-magnitude entry positive (first index on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn exact_top_k(cov: DMatrix<f64>, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(k)
        .map(|i| {
            (
                eig.eigenvalues[i],
                eig.eigenvectors.column(i).iter().copied().collect::<Vec<_>>(),
            )
        })
        .unzip()
}

/// Block orthogonal iteration with a Rayleigh-Ritz step.
fn iterative_top_k(cov: &DMatrix<f64>, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = cov.nrows();
    let block = (k + 8).min(d);
    // deterministic start: shifted identity columns plus a smooth perturbation
    let mut q = DMatrix::from_fn(d, block, |i, j| {
        let base = if i == j { 1.0 } else { 0.0 };
        base + 1e-3 * (((i * 31 + j * 17) % 97) as f64 / 97.0 - 0.5)
    });
    q = q.qr().q();
    let scale = cov.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let mut values = Vec::new();
    let mut vectors = DMatrix::zeros(d, block);
    for _ in 0..ITERATIVE_MAX_ITERS {
        let z = cov * &q;
        q = z.qr().q();
        let small = q.transpose() * cov * &q;
        let small = 0.5 * (&small + small.transpose());
        let eig = SymmetricEigen::new(small);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let w = DMatrix::from_fn(block, block, |i, j| eig.eigenvectors[(i, order[j])]);
        vectors = &q * w;
        values = order.iter().map(|&i| eig.eigenvalues[i]).collect::<Vec<_>>();
        let converged = (0..k).all(|c| {
            let v = vectors.column(c);
            let r = cov * v - v * values[c];
            r.norm() <= ITERATIVE_TOL * scale
        });
        q = vectors.clone();
        if converged {
            break;
        }
    }
    let vecs = (0..k).map(|c| vectors.column(c).iter().copied().collect()).collect();
    values.truncate(k);
    (values, vecs)
}

/// Fits the top `target_dims` principal directions of the centered data.
pub fn fit_pca(set: &EmbeddingSet, target_dims: usize, options: PcaOptions) -> Result<PcaModel> {
    let (n, d) = (set.len(), set.dim());
    if n < 2 {
        return Err(Error::Parameter("PCA needs at least 2 rows".into()));
    }
    let max_dims = (n - 1).min(d);
    if target_dims < 1 || target_dims > max_dims {
        return Err(Error::Parameter(format!(
            "target_dims {target_dims} outside 1..={max_dims} (N={n}, D={d})"
        )));
    }
    let mut mean = vec![0.0; d];
    for row in set.rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let cov = covariance(set, &mean);
    let total_variance: f64 = cov.diagonal().iter().sum();
    let (mut values, mut vectors) = if d <= options.exact_max_dim {
        exact_top_k(cov, target_dims)
    } else {
        iterative_top_k(&cov, target_dims)
    };

    let degenerate = total_variance <= 0.0;
    let tol = values.first().copied().unwrap_or(0.0).max(0.0) * 1e-10 * d as f64;
    let mut rank_deficient = false;
    for v in &mut values {
        if *v <= tol || degenerate {
            *v = 0.0;
            rank_deficient = true;
        }
    }
    for v in &mut vectors {
        fix_sign(v);
    }
    Ok(PcaModel {
        mean,
        components: vectors.into_iter().flatten().collect(),
        explained_variance: values,
        input_dim: d,
        whiten: options.whiten,
        degenerate,
        rank_deficient,
    })
}

/// Projects every row: `(x - mean) * components^T`.
pub fn transform(model: &PcaModel, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    if set.dim() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            found: set.dim(),
        });
    }
    let k = model.target_dims();
    let mut data = vec![0.0; set.len() * k];
    data.par_chunks_mut(k)
        .enumerate()
        .for_each(|(i, out)| model.project_row(set.row(i), out));
    EmbeddingSet::new(set.ids().to_vec(), data, k)
}

pub fn fit_transform(
    set: &EmbeddingSet,
    target_dims: usize,
    options: PcaOptions,
) -> Result<(PcaModel, EmbeddingSet)> {
    let model = fit_pca(set, target_dims, options)?;
    let projected = transform(&model, set)?;
    Ok((model, projected))
}
