//! Chance calibration by label permutation, and label-noise sweeps.
//!
//! Randomness comes from ChaCha8 seeded with the run seed; permutation `p`
//! (or noise level `p`) draws from stream `p`, so results do not depend on
//! how work is scheduled across threads.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{self, MetricId, MetricScores, NearestPrefix, NeighborTable};
use crate::stats::{percentile, KahanSum};
use crate::tensor::{DistanceMatrix, LabelSet, INVALID_CLASS};

pub const DEFAULT_PERMUTATIONS: usize = 1000;
pub const MIN_PERMUTATIONS: usize = 100;
/// Shuffles attempted per permutation before giving up on a degenerate metric.
const ATTEMPTS_PER_PERMUTATION: usize = 10;

/// Generator for substream `stream` of a run seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationResult {
    pub metric: MetricId,
    pub observed: f64,
    pub baseline_mean: f64,
    /// 2.5th percentile of the permuted scores.
    pub ci_low: f64,
    /// 97.5th percentile of the permuted scores.
    pub ci_high: f64,
    /// Share of permuted scores at or above `observed`.
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
    /// Extra shuffles drawn because a metric was undefined.
    pub retries: usize,
    pub permuted_scores: Vec<f64>,
}

enum Scorer {
    Precision(NeighborTable, usize),
    Separation(NearestPrefix, MetricId),
    Other(MetricId),
}

impl Scorer {
    fn new(dist: &DistanceMatrix, codes: &[u32], id: MetricId) -> Result<Self> {
        Ok(match id {
            MetricId::PAtK(k) => Scorer::Precision(NeighborTable::build(dist, codes, k)?, k),
            MetricId::Gsr | MetricId::Csr => {
                Scorer::Separation(NearestPrefix::build(dist, NearestPrefix::DEFAULT_WIDTH), id)
            }
            other => Scorer::Other(other),
        })
    }

    fn score(&self, dist: &DistanceMatrix, codes: &[u32], num_classes: usize, min_class_size: usize) -> Result<f64> {
        match self {
            Scorer::Precision(table, k) => metrics::precision_from_table(table, codes, *k),
            Scorer::Separation(prefix, MetricId::Csr) => {
                metrics::csr_with(dist, codes, num_classes, min_class_size, Some(prefix))
            }
            Scorer::Separation(prefix, _) => metrics::gsr_with(dist, codes, num_classes, min_class_size, Some(prefix)),
            Scorer::Other(id) => metrics::score_codes(dist, codes, num_classes, *id, min_class_size),
        }
    }
}

/// Recomputes `metric` under `n_permutations` uniform shuffles of the labels
/// of labeled rows, with the geometry fixed.
pub fn permutation_baseline(
    dist: &DistanceMatrix,
    labels: &LabelSet,
    metric: MetricId,
    n_permutations: usize,
    seed: u64,
    min_class_size: usize,
) -> Result<PermutationResult> {
    if n_permutations < MIN_PERMUTATIONS {
        return Err(Error::Parameter(format!(
            "n_permutations = {n_permutations} is below the minimum of {MIN_PERMUTATIONS}"
        )));
    }
    metrics::check_aligned(dist, labels.len())?;
    let codes = labels.codes();
    let num_classes = labels.num_classes();
    let scorer = Scorer::new(dist, codes, metric)?;
    let observed = scorer.score(dist, codes, num_classes, min_class_size)?;

    let labeled: Vec<usize> = (0..codes.len()).filter(|&i| codes[i] != INVALID_CLASS).collect();
    let pool: Vec<u32> = labeled.iter().map(|&i| codes[i]).collect();

    let outcomes: Vec<Result<(f64, usize)>> = (0..n_permutations)
        .into_par_iter()
        .map_init(
            || (codes.to_vec(), pool.clone()),
            |(shuffled, values), p| {
                let mut rng = substream(seed, p as u64);
                let mut last_err = None;
                for attempt in 0..ATTEMPTS_PER_PERMUTATION {
                    values.copy_from_slice(&pool);
                    values.shuffle(&mut rng);
                    for (&i, &c) in labeled.iter().zip(values.iter()) {
                        shuffled[i] = c;
                    }
                    match scorer.score(dist, shuffled, num_classes, min_class_size) {
                        Ok(v) => return Ok((v, attempt)),
                        Err(e) => last_err = Some(e),
                    }
                }
                Err(last_err.expect("at least one attempt"))
            },
        )
        .collect();

    let mut permuted_scores = Vec::with_capacity(n_permutations);
    let mut retries = 0;
    for outcome in outcomes {
        let (v, r) = outcome.map_err(|e| {
            Error::Degenerate(format!(
                "{metric} stayed undefined after {ATTEMPTS_PER_PERMUTATION} shuffles: {e}"
            ))
        })?;
        permuted_scores.push(v);
        retries += r;
    }
    if retries > 0 {
        log::warn!("{metric}: {retries} permutations were redrawn");
    }
    Ok(summarize(metric, observed, permuted_scores, seed, retries))
}

fn summarize(metric: MetricId, observed: f64, permuted_scores: Vec<f64>, seed: u64, retries: usize) -> PermutationResult {
    let n = permuted_scores.len();
    let mut sum = KahanSum::new();
    permuted_scores.iter().for_each(|&v| sum.add(v));
    let at_or_above = permuted_scores.iter().filter(|&&v| v >= observed).count();
    PermutationResult {
        metric,
        observed,
        baseline_mean: sum.total() / n as f64,
        ci_low: percentile(&permuted_scores, 2.5).expect("nonempty"),
        ci_high: percentile(&permuted_scores, 97.5).expect("nonempty"),
        p_value: at_or_above as f64 / n as f64,
        n_permutations: n,
        seed,
        retries,
        permuted_scores,
    }
}

/// Scores at one label-noise level.
#[derive(Debug)]
pub struct NoiseLevel {
    pub fraction: f64,
    /// Rows whose label was changed.
    pub flipped: usize,
    pub scores: MetricScores,
    pub errors: BTreeMap<MetricId, Error>,
}

/// Number of labeled rows flipped at `fraction`: `ceil(fraction * n)`, with a
/// small tolerance so that products like `0.1 * 100` round as intended.
pub fn flip_count(fraction: f64, n_labeled: usize) -> usize {
    let raw = fraction * n_labeled as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(n_labeled)
}

/// Flips `flip_count(fraction, ..)` labeled rows to a different class drawn
/// uniformly from the other classes present.
pub fn flip_labels(codes: &[u32], num_classes: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<u32>, usize)> {
    let labeled: Vec<usize> = (0..codes.len()).filter(|&i| codes[i] != INVALID_CLASS).collect();
    let present: Vec<u32> = {
        let mut seen = vec![false; num_classes];
        labeled.iter().for_each(|&i| seen[codes[i] as usize] = true);
        (0..num_classes as u32).filter(|&c| seen[c as usize]).collect()
    };
    if present.len() < 2 {
        return Err(Error::Parameter("label flipping needs at least two classes".into()));
    }
    let count = flip_count(fraction, labeled.len());
    let mut out = codes.to_vec();
    for pick in index::sample(rng, labeled.len(), count).into_vec() {
        let i = labeled[pick];
        let own = present.binary_search(&codes[i]).expect("present class");
        let mut r = rng.random_range(0..present.len() - 1);
        if r >= own {
            r += 1;
        }
        out[i] = present[r];
    }
    Ok((out, count))
}

/// Recomputes `metric_ids` after flipping each requested fraction of labels.
pub fn label_noise_sweep(
    dist: &DistanceMatrix,
    labels: &LabelSet,
    fractions: &[f64],
    metric_ids: &[MetricId],
    seed: u64,
    min_class_size: usize,
) -> Result<Vec<NoiseLevel>> {
    metrics::check_aligned(dist, labels.len())?;
    if let Some(bad) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(Error::Parameter(format!("noise fraction {bad} outside [0, 1)")));
    }
    if fractions.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Parameter("noise fractions must be sorted ascending".into()));
    }
    if metrics::distinct_classes(labels.codes(), labels.num_classes()) < 2 {
        return Err(Error::Parameter("label flipping needs at least two classes".into()));
    }
    fractions
        .iter()
        .enumerate()
        .map(|(level, &fraction)| {
            let mut rng = substream(seed, level as u64);
            let (codes, flipped) = flip_labels(labels.codes(), labels.num_classes(), fraction, &mut rng)?;
            let (scores, errors) =
                metrics::evaluate_codes(dist, &codes, labels.num_classes(), metric_ids, min_class_size)?;
            Ok(NoiseLevel {
                fraction,
                flipped,
                scores,
                errors,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::MatrixMetric;

    fn random_instance(n_classes: usize, per_class: usize, seed: u64) -> (DistanceMatrix, LabelSet) {
        let mut rng = substream(seed, 999);
        let n = n_classes * per_class;
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let dist = DistanceMatrix::from_fn(n, MatrixMetric::Euclidean, |i, j| {
            pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        })
        .unwrap();
        let labels = LabelSet::new((0..n).map(|i| format!("c{}", i / per_class)));
        (dist, labels)
    }

    #[test]
    fn shuffled_p_at_1_matches_analytic_mean() {
        let (dist, labels) = random_instance(10, 10, 1);
        let res = permutation_baseline(&dist, &labels, MetricId::P_AT_1, 1000, 7, 2).unwrap();
        let expected = 9.0 / 99.0;
        let sd = {
            let m = res.baseline_mean;
            (res.permuted_scores.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 999.0).sqrt()
        };
        assert!((res.baseline_mean - expected).abs() < 3.0 * sd / 1000f64.sqrt() + 1e-12);
        assert!(res.ci_low <= res.baseline_mean && res.baseline_mean <= res.ci_high);
    }

    #[test]
    fn separated_classes_have_tiny_p_value() {
        let labels: Vec<&str> = (0..40).map(|i| if i % 4 == 0 { "a" } else if i % 4 == 1 { "b" } else if i % 4 == 2 { "c" } else { "d" }).collect();
        let dist = DistanceMatrix::from_fn(40, MatrixMetric::External, |i, j| if i % 4 == j % 4 { 1.0 } else { 5.0 }).unwrap();
        let labels = LabelSet::new(labels);
        for id in [MetricId::P_AT_1, MetricId::Gsr] {
            let res = permutation_baseline(&dist, &labels, id, 1000, 3, 2).unwrap();
            assert_eq!(res.p_value, 0.0, "{id}");
            if id == MetricId::Gsr {
                assert!(res.baseline_mean > 0.0 && res.baseline_mean < 100.0);
            }
        }
    }

    #[test]
    fn observed_below_everything_gives_p_one() {
        let res = summarize(MetricId::Gsr, -1.0, vec![0.0, 1.0, 2.0], 0, 0);
        assert_eq!(res.p_value, 1.0);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (dist, labels) = random_instance(4, 6, 2);
        let a = permutation_baseline(&dist, &labels, MetricId::Gsr, 100, 11, 2).unwrap();
        let b = permutation_baseline(&dist, &labels, MetricId::Gsr, 100, 11, 2).unwrap();
        assert_eq!(a, b);
        let c = permutation_baseline(&dist, &labels, MetricId::Gsr, 100, 12, 2).unwrap();
        assert_ne!(a.permuted_scores, c.permuted_scores);
    }

    #[test]
    fn too_few_permutations_rejected() {
        let (dist, labels) = random_instance(2, 3, 3);
        assert!(matches!(
            permutation_baseline(&dist, &labels, MetricId::P_AT_1, 99, 0, 2),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn flips_change_exactly_the_requested_count() {
        let labels = LabelSet::new((0..100).map(|i| format!("c{}", i % 7)));
        for (level, fraction) in [0.0, 0.01, 0.05, 0.1, 0.2, 0.37].into_iter().enumerate() {
            let mut rng = substream(5, level as u64);
            let (codes, count) = flip_labels(labels.codes(), 7, fraction, &mut rng).unwrap();
            let changed = codes.iter().zip(labels.codes()).filter(|(a, b)| a != b).count();
            assert_eq!(count, (fraction * 100.0_f64).round() as usize);
            assert_eq!(changed, count);
        }
        assert_eq!(flip_count(0.1, 100), 10);
        assert_eq!(flip_count(0.101, 100), 11);
    }

    #[test]
    fn zero_noise_equals_clean_scores() {
        let (dist, labels) = random_instance(3, 5, 4);
        let ids = [MetricId::P_AT_1, MetricId::Gsr, MetricId::Cs];
        let levels = label_noise_sweep(&dist, &labels, &[0.0, 0.2], &ids, 9, 2).unwrap();
        let (clean, _) = metrics::evaluate(&dist, &labels, &ids, 2).unwrap();
        assert_eq!(levels[0].scores, clean);
        assert_eq!(levels[0].flipped, 0);
        assert_eq!(levels[1].flipped, 3);
    }

    #[test]
    fn noise_sweep_preconditions() {
        let (dist, labels) = random_instance(2, 3, 4);
        let ids = [MetricId::Gsr];
        assert!(label_noise_sweep(&dist, &labels, &[1.0], &ids, 0, 2).is_err());
        assert!(label_noise_sweep(&dist, &labels, &[0.2, 0.1], &ids, 0, 2).is_err());
        let one = LabelSet::new(["a"; 6]);
        assert!(matches!(
            label_noise_sweep(&dist, &one, &[0.1], &ids, 0, 2),
            Err(Error::Parameter(_))
        ));
    }
}
