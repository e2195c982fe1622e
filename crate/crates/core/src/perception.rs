//! Agreement between embedding distances and behavioral judgments.
//!
//! Sign convention for the probe correlations: the distance difference is
//! `d(X, A) - d(X, B)` and the decision is encoded `+1` for A and `-1` for B.
//! A model aligned with the listener therefore shows a negative correlation.

use std::path::Path;

use serde::Deserialize;
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::stats::{kendall_tau_b, spearman_rho};
use crate::tensor::{DistanceMatrix, IdIndex};

/// One-sided upper tail `P[K >= successes]` for `K ~ Binomial(n, chance)`.
pub fn binomial_test(successes: u64, n: u64, chance: f64) -> Result<f64> {
    if n == 0 || successes > n {
        return Err(Error::Parameter(format!(
            "binomial test needs 0 <= successes ({successes}) <= n ({n}) and n >= 1"
        )));
    }
    if !(chance > 0.0 && chance < 1.0) {
        return Err(Error::Parameter(format!("chance {chance} outside (0, 1)")));
    }
    if successes == 0 {
        return Ok(1.0);
    }
    let (lp, lq) = (chance.ln(), (-chance).ln_1p());
    let logs: Vec<f64> = (successes..=n)
        .map(|k| {
            let binom = if k == n || k == 0 { 0.0 } else { ln_binomial(n, k) };
            binom + k as f64 * lp + (n - k) as f64 * lq
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: f64 = logs.iter().map(|&l| (l - max).exp()).sum();
    Ok((max.exp() * scaled).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    A,
    B,
}

impl std::str::FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Decision::A),
            "B" | "b" => Ok(Decision::B),
            other => Err(Error::Parameter(format!("decision `{other}` is neither A nor B"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeTrial {
    pub x_id: String,
    pub a_id: String,
    pub b_id: String,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triplet {
    pub anchor_id: String,
    pub positive_id: String,
    pub negative_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub n_trials: usize,
    /// Trials dropped because an id did not resolve or X matched A or B.
    pub skipped: usize,
    pub correct: usize,
    /// Trials with `d(X,A) == d(X,B)`, counted as half correct.
    pub ties: usize,
    pub accuracy: f64,
    pub p_value: f64,
    /// `None` when either side is constant.
    pub spearman_rho: Option<f64>,
    pub kendall_tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletResult {
    pub n_triplets: usize,
    pub skipped: usize,
    pub agree: usize,
    pub ties: usize,
    pub accuracy: f64,
    pub p_value: f64,
}

fn resolve(index: &IdIndex, ids: [&str; 3]) -> Option<[usize; 3]> {
    let r = [index.get(ids[0])?, index.get(ids[1])?, index.get(ids[2])?];
    (r[0] != r[1] && r[0] != r[2]).then_some(r)
}

fn tally(correct: usize, ties: usize, n: usize) -> Result<(f64, f64)> {
    let accuracy = (correct as f64 + 0.5 * ties as f64) / n as f64;
    let successes = (correct + ties / 2) as u64;
    Ok((accuracy, binomial_test(successes, n as u64, 0.5)?))
}

/// Scores a two-alternative forced-choice run: the model picks whichever of A
/// and B is closer to X.
pub fn probe_2afc(dist: &DistanceMatrix, index: &IdIndex, trials: &[ProbeTrial]) -> Result<ProbeResult> {
    let mut diffs = Vec::with_capacity(trials.len());
    let mut coded = Vec::with_capacity(trials.len());
    let (mut correct, mut ties, mut skipped) = (0, 0, 0);
    for t in trials {
        let Some([x, a, b]) = resolve(index, [&t.x_id, &t.a_id, &t.b_id]) else {
            skipped += 1;
            continue;
        };
        if a == b {
            skipped += 1;
            continue;
        }
        let diff = dist.get(x, a) - dist.get(x, b);
        let chose_a = t.decision == Decision::A;
        if diff == 0.0 {
            ties += 1;
        } else if (diff < 0.0) == chose_a {
            correct += 1;
        }
        diffs.push(diff);
        coded.push(if chose_a { 1.0 } else { -1.0 });
    }
    if diffs.is_empty() {
        return Err(Error::Parameter(format!("all {} probe trials were skipped", trials.len())));
    }
    if skipped > 0 {
        log::warn!("{skipped} probe trials skipped");
    }
    if ties > 0 {
        log::warn!("{ties} probe trials tied");
    }
    let (accuracy, p_value) = tally(correct, ties, diffs.len())?;
    Ok(ProbeResult {
        n_trials: diffs.len(),
        skipped,
        correct,
        ties,
        accuracy,
        p_value,
        spearman_rho: spearman_rho(&diffs, &coded),
        kendall_tau: kendall_tau_b(&diffs, &coded),
    })
}

/// Fraction of triplets with `d(anchor, positive) < d(anchor, negative)`.
pub fn triplet_eval(dist: &DistanceMatrix, index: &IdIndex, triplets: &[Triplet]) -> Result<TripletResult> {
    let (mut agree, mut ties, mut skipped, mut n) = (0, 0, 0, 0);
    for t in triplets {
        let Some([a, p, q]) = resolve(index, [&t.anchor_id, &t.positive_id, &t.negative_id]) else {
            skipped += 1;
            continue;
        };
        if p == q {
            skipped += 1;
            continue;
        }
        n += 1;
        let (dp, dn) = (dist.get(a, p), dist.get(a, q));
        if dp < dn {
            agree += 1;
        } else if dp == dn {
            ties += 1;
        }
    }
    if n == 0 {
        return Err(Error::Parameter(format!("all {} triplets were skipped", triplets.len())));
    }
    let (accuracy, p_value) = tally(agree, ties, n)?;
    Ok(TripletResult {
        n_triplets: n,
        skipped,
        agree,
        ties,
        accuracy,
        p_value,
    })
}

#[derive(Deserialize)]
struct TrialRow {
    x_id: String,
    a_id: String,
    b_id: String,
    decision: String,
}

/// Reads `x_id,a_id,b_id,decision` rows.
pub fn read_trials_csv(path: &Path) -> Result<Vec<ProbeTrial>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<TrialRow>()
        .enumerate()
        .map(|(line, row)| {
            let row = row?;
            let decision = row
                .decision
                .parse()
                .map_err(|e: Error| Error::format(path.display().to_string(), format!("row {}: {e}", line + 1)))?;
            Ok(ProbeTrial {
                x_id: row.x_id,
                a_id: row.a_id,
                b_id: row.b_id,
                decision,
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct TripletRow {
    anchor_id: String,
    positive_id: String,
    negative_id: String,
}

/// Reads `anchor_id,positive_id,negative_id` rows.
pub fn read_triplets_csv(path: &Path) -> Result<Vec<Triplet>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<TripletRow>()
        .map(|row| {
            let row = row?;
            Ok(Triplet {
                anchor_id: row.anchor_id,
                positive_id: row.positive_id,
                negative_id: row.negative_id,
            })
        })
        .collect()
}
