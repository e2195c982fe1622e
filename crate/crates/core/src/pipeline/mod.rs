//! Config-driven orchestration from manifests or precomputed matrices to a
//! tabular report.
//!
//! For every subset the runner loads and filters the data once, then walks
//! each pooling and PCA setting, each distance kind, and optionally a DTW
//! re-ranked variant of each matrix. Every configured score appears in the
//! report either with a value or with the error that prevented it; one failed
//! combination never stops the others.

mod config;
mod correlate;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::baselines::{label_noise_sweep, permutation_baseline};
use crate::clustering::{align_assignments, clustering_scores, kmeans, read_assignments_csv, weighted_purity, ClusterAssignment};
use crate::distances::{pairwise_matrix, MetricKind};
use crate::dtw::{dtw_rerank, prepare_sequences, PreparedSequence};
use crate::error::{Error, Result};
use crate::metrics::{distinct_classes, evaluate, restrict_codes, MetricId};
use crate::pca::{fit_transform, PcaOptions};
use crate::perception::{probe_2afc, read_trials_csv, read_triplets_csv, triplet_eval, ProbeTrial, Triplet};
use crate::pooling::pool_set;
use crate::tensor::{
    filter_dataset, load_sequence_set, read_labels_csv, read_manifest, read_matrix_file, write_matrix_file,
    DistanceMatrix, EmbeddingSet, IdIndex, LabelSet, SequenceEmbedding,
};

pub use config::{
    validate, ClusteringSettings, FeatureConfig, NoiseSettings, OneOrMany, Overrides, PcaEntry,
    PermutationSettings, RawConfig, RunConfig, SubsetSource, SubsetSpec, DEFAULT_KMEANS_MAX_ITER,
    DEFAULT_PCA_DIMS, SCHEMA_VERSION,
};
pub use correlate::{metric_correlation, CorrelationMatrix, MIN_CONFIGS};
pub use report::{format_value, value_style, EvalReport, ReportMetadata, ReportRow, ValueStyle};

pub const PERMUTATION_STATS: [&str; 4] = ["baseline_mean", "ci_low", "ci_high", "p_value"];
pub const PROBE_STATS: [&str; 4] = ["accuracy", "p_value", "spearman_rho", "kendall_tau"];
pub const TRIPLET_STATS: [&str; 2] = ["accuracy", "p_value"];
pub const CLUSTER_STATS: [&str; 4] = ["nmi", "purity", "ari", "weighted_purity"];

/// Feature-config label used for subsets given as precomputed matrices.
pub const PRECOMPUTED: &str = "precomputed";
/// Feature-config and metric-kind label for imported cluster assignments.
pub const EXTERNAL: &str = "external";

type Outcome = std::result::Result<f64, String>;
type Scores = BTreeMap<String, Outcome>;

/// Derives a reproducible seed for one purpose from the run seed.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn noise_score_name(fraction: f64, metric: MetricId) -> String {
    format!("noise@{fraction}.{metric}")
}

/// Score names produced for every distance matrix of `subset`, in report order.
pub fn matrix_score_names(cfg: &RunConfig, subset: &SubsetSpec) -> Vec<String> {
    let mut names: Vec<String> = cfg.metrics.iter().map(MetricId::to_string).collect();
    if let Some(p) = &cfg.permutation {
        for m in &p.metrics {
            names.extend(PERMUTATION_STATS.iter().map(|s| format!("{m}.{s}")));
        }
    }
    if let Some(n) = &cfg.noise {
        for &f in &n.fractions {
            names.extend(n.metrics.iter().map(|&m| noise_score_name(f, m)));
        }
    }
    if subset.trials.is_some() {
        names.extend(PROBE_STATS.iter().map(|s| format!("probe.{s}")));
    }
    if subset.triplets.is_some() {
        names.extend(TRIPLET_STATS.iter().map(|s| format!("triplet.{s}")));
    }
    names
}

fn prefixed(prefix: &str, stats: &[&str]) -> Vec<String> {
    stats.iter().map(|s| format!("{prefix}.{s}")).collect()
}

struct Assembler {
    report: EvalReport,
}

impl Assembler {
    fn emit(&mut self, subset: &str, feature: &str, kind: &str, names: &[String], result: Result<Scores>) {
        let mut scores = match result {
            Ok(s) => s,
            Err(e) => {
                let msg = e.to_string();
                names.iter().map(|n| (n.clone(), Err(msg.clone()))).collect()
            }
        };
        for name in names {
            let outcome = scores
                .remove(name)
                .unwrap_or_else(|| Err("score was not computed".into()));
            let (value, error) = match outcome {
                Ok(v) if v.is_finite() => (Some(v), None),
                Ok(v) => (None, Some(format!("non-finite result {v}"))),
                Err(e) => (None, Some(e)),
            };
            if let Some(e) = &error {
                log::warn!("{subset} / {feature} / {kind} / {name}: {e}");
            }
            self.report.rows.push(ReportRow {
                subset: subset.into(),
                feature_config: feature.into(),
                metric_kind: kind.into(),
                score_name: name.clone(),
                value,
                error,
            });
        }
    }

    fn flag(&mut self, msg: String) {
        log::info!("{msg}");
        self.report.metadata.flags.push(msg);
    }
}

struct Perception {
    trials: Option<std::result::Result<Vec<ProbeTrial>, String>>,
    triplets: Option<std::result::Result<Vec<Triplet>, String>>,
}

impl Perception {
    fn load(subset: &SubsetSpec) -> Self {
        Self {
            trials: subset.trials.as_deref().map(|p| read_trials_csv(p).map_err(|e| e.to_string())),
            triplets: subset.triplets.as_deref().map(|p| read_triplets_csv(p).map_err(|e| e.to_string())),
        }
    }
}

/// Everything computed from one distance matrix.
fn score_matrix(
    cfg: &RunConfig,
    dist: &DistanceMatrix,
    labels: &LabelSet,
    ids: &[String],
    seed_parts: &[&str],
    perception: &Perception,
) -> Scores {
    let mut out = Scores::new();
    let min = cfg.min_class_size;
    match evaluate(dist, labels, &cfg.metrics, min) {
        Ok((scores, errors)) => {
            for &id in &cfg.metrics {
                let v = match errors.get(&id) {
                    Some(e) => Err(e.to_string()),
                    None => scores.get(id).ok_or_else(|| "score was not computed".to_string()),
                };
                out.insert(id.to_string(), v);
            }
        }
        Err(e) => {
            for id in &cfg.metrics {
                out.insert(id.to_string(), Err(e.to_string()));
            }
        }
    }

    if let Some(p) = &cfg.permutation {
        for &id in &p.metrics {
            let name = id.to_string();
            let seed = derive_seed(cfg.seed, &[seed_parts, &["permutation", &name]].concat());
            match permutation_baseline(dist, labels, id, p.count, seed, min) {
                Ok(r) => {
                    for (stat, v) in PERMUTATION_STATS
                        .iter()
                        .zip([r.baseline_mean, r.ci_low, r.ci_high, r.p_value])
                    {
                        out.insert(format!("{name}.{stat}"), Ok(v));
                    }
                }
                Err(e) => {
                    for stat in PERMUTATION_STATS {
                        out.insert(format!("{name}.{stat}"), Err(e.to_string()));
                    }
                }
            }
        }
    }

    if let Some(n) = &cfg.noise {
        let seed = derive_seed(cfg.seed, &[seed_parts, &["noise"]].concat());
        match label_noise_sweep(dist, labels, &n.fractions, &n.metrics, seed, min) {
            Ok(levels) => {
                for level in levels {
                    for &id in &n.metrics {
                        let v = match level.errors.get(&id) {
                            Some(e) => Err(e.to_string()),
                            None => level.scores.get(id).ok_or_else(|| "score was not computed".to_string()),
                        };
                        out.insert(noise_score_name(level.fraction, id), v);
                    }
                }
            }
            Err(e) => {
                for &f in &n.fractions {
                    for &id in &n.metrics {
                        out.insert(noise_score_name(f, id), Err(e.to_string()));
                    }
                }
            }
        }
    }

    if perception.trials.is_some() || perception.triplets.is_some() {
        let index = IdIndex::new(ids);
        if let Some(trials) = &perception.trials {
            let result = trials.clone().and_then(|t| probe_2afc(dist, &index, &t).map_err(|e| e.to_string()));
            for stat in PROBE_STATS {
                let v = result.as_ref().map_err(Clone::clone).and_then(|r| match stat {
                    "accuracy" => Ok(r.accuracy),
                    "p_value" => Ok(r.p_value),
                    "spearman_rho" => r
                        .spearman_rho
                        .ok_or_else(|| "undefined: a probe vector is constant".to_string()),
                    _ => r
                        .kendall_tau
                        .ok_or_else(|| "undefined: a probe vector is constant".to_string()),
                });
                out.insert(format!("probe.{stat}"), v);
            }
        }
        if let Some(triplets) = &perception.triplets {
            let result = triplets.clone().and_then(|t| triplet_eval(dist, &index, &t).map_err(|e| e.to_string()));
            out.insert("triplet.accuracy".into(), result.as_ref().map(|r| r.accuracy).map_err(Clone::clone));
            out.insert("triplet.p_value".into(), result.as_ref().map(|r| r.p_value).map_err(Clone::clone));
        }
    }
    out
}

fn cluster_outcomes(prefix: &str, assign: &ClusterAssignment, labels: &LabelSet) -> Scores {
    let mut out = Scores::new();
    match clustering_scores(assign, labels) {
        Ok(s) => {
            out.insert(format!("{prefix}.nmi"), Ok(s.nmi));
            out.insert(format!("{prefix}.purity"), Ok(s.purity));
            out.insert(format!("{prefix}.ari"), Ok(s.ari));
        }
        Err(e) => {
            for stat in ["nmi", "purity", "ari"] {
                out.insert(format!("{prefix}.{stat}"), Err(e.to_string()));
            }
        }
    }
    out.insert(
        format!("{prefix}.weighted_purity"),
        weighted_purity(assign, labels).map_err(|e| e.to_string()),
    );
    out
}

/// A subset after loading and filtering, ready for feature extraction.
struct ManifestData {
    ids: Vec<String>,
    labels: LabelSet,
    sequences: Vec<SequenceEmbedding>,
    digest: String,
    sanitized: usize,
}

fn load_manifest_subset(cfg: &RunConfig, name: &str, path: &Path) -> Result<ManifestData> {
    let manifest = read_manifest(path, name)?;
    let filtered = filter_dataset(&manifest, cfg.min_class_size, cfg.duration_percentile)?;
    if filtered.len() < manifest.len() {
        log::info!("{name}: filtering kept {} of {} clips", filtered.len(), manifest.len());
    }
    let loaded = load_sequence_set(&filtered)?;
    Ok(ManifestData {
        ids: filtered.clip_ids(),
        labels: LabelSet::new(filtered.labels()),
        sequences: loaded.sequences,
        digest: loaded.content_digest,
        sanitized: loaded.sanitized_values,
    })
}

fn build_features(data: &ManifestData, fc: FeatureConfig, flags: &mut Vec<String>, where_: &str) -> Result<EmbeddingSet> {
    let pooled = pool_set(&data.sequences, fc.pooling)?;
    if pooled.time_axis_adjusted {
        flags.push(format!("{where_}: time-length pooling padded to the longest sequence"));
    }
    let Some(requested) = fc.pca_dims else {
        return Ok(pooled.set);
    };
    let set = pooled.set;
    let dims = requested.min(set.len().saturating_sub(1)).min(set.dim());
    if dims == 0 {
        return Err(Error::DegenerateDataset(format!(
            "PCA needs at least two items (have {})",
            set.len()
        )));
    }
    if dims < requested {
        flags.push(format!("{where_}: pca_dims clamped from {requested} to {dims}"));
    }
    let options = PcaOptions {
        whiten: fc.whiten,
        ..PcaOptions::default()
    };
    let (model, projected) = fit_transform(&set, dims, options)?;
    if model.degenerate {
        flags.push(format!("{where_}: PCA input has zero variance"));
    } else if model.rank_deficient {
        flags.push(format!("{where_}: PCA target exceeds the centered rank"));
    }
    Ok(projected)
}

fn cache_key(digest: &str, fc: FeatureConfig, kind: MetricKind, n: usize) -> String {
    let mut h = Sha256::new();
    for part in [
        "distance-matrix-v1",
        digest,
        &fc.pooling.to_string(),
        &fc.pca_dims.map_or("none".to_string(), |d| d.to_string()),
        if fc.whiten { "whiten" } else { "plain" },
        kind.as_str(),
        &n.to_string(),
    ] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

fn matrix_for(cfg: &RunConfig, digest: &str, fc: FeatureConfig, kind: MetricKind, set: &EmbeddingSet) -> Result<DistanceMatrix> {
    let path = cfg
        .output_dir
        .join("cache")
        .join(format!("{}.bin", cache_key(digest, fc, kind, set.len())));
    if cfg.cache && path.is_file() {
        match read_matrix_file(&path) {
            Ok(m) if m.len() == set.len() => {
                log::debug!("cache hit {}", path.display());
                return Ok(m);
            }
            Ok(_) | Err(_) => log::warn!("ignoring unusable cache entry {}", path.display()),
        }
    }
    let result = pairwise_matrix(set, kind)?;
    if result.flagged_pairs > 0 {
        log::warn!("{} {kind} pairs fell back to the maximal distance", result.flagged_pairs);
    }
    if cfg.cache {
        let dir = path.parent().expect("cache dir");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = path.with_extension("tmp");
        write_matrix_file(&tmp, &result.matrix)?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    }
    Ok(result.matrix)
}

fn dtw_kind(kind: MetricKind) -> String {
    format!("{kind}+dtw")
}

fn run_manifest_subset(cfg: &RunConfig, subset: &SubsetSpec, path: &Path, out: &mut Assembler) {
    let names = matrix_score_names(cfg, subset);
    let kmeans_names = prefixed("kmeans", &CLUSTER_STATS);
    let assigned_names = prefixed("assigned", &CLUSTER_STATS);
    let fcs = cfg.feature_configs();
    let data = match load_manifest_subset(cfg, &subset.name, path) {
        Ok(d) => d,
        Err(e) => {
            let msg = e.to_string();
            let fail = || -> Result<Scores> { Err(Error::DegenerateDataset(msg.clone())) };
            for fc in &fcs {
                let f = fc.to_string();
                for &kind in &cfg.metric_kinds {
                    out.emit(&subset.name, &f, kind.as_str(), &names, fail());
                    if cfg.dtw.is_some() {
                        out.emit(&subset.name, &f, &dtw_kind(kind), &names, fail());
                    }
                }
                if cfg.clustering.is_some() {
                    out.emit(&subset.name, &f, "euclidean", &kmeans_names, fail());
                }
            }
            if subset.assignments.is_some() {
                out.emit(&subset.name, EXTERNAL, EXTERNAL, &assigned_names, fail());
            }
            return;
        }
    };
    out.report.metadata.sanitized_values.insert(subset.name.clone(), data.sanitized);
    let perception = Perception::load(subset);
    let mut prepared: Option<std::result::Result<Vec<PreparedSequence>, String>> = None;

    for fc in &fcs {
        let f = fc.to_string();
        let where_ = format!("{} / {f}", subset.name);
        let mut flags = Vec::new();
        let features = build_features(&data, *fc, &mut flags, &where_).map_err(|e| e.to_string());
        for msg in flags {
            out.flag(msg);
        }
        for &kind in &cfg.metric_kinds {
            let dist = features
                .clone()
                .and_then(|set| matrix_for(cfg, &data.digest, *fc, kind, &set).map_err(|e| e.to_string()));
            let seed_parts = [subset.name.as_str(), f.as_str(), kind.as_str()];
            let scores = dist
                .as_ref()
                .map(|d| score_matrix(cfg, d, &data.labels, &data.ids, &seed_parts, &perception))
                .map_err(|e| Error::Degenerate(e.clone()));
            out.emit(&subset.name, &f, kind.as_str(), &names, scores);

            if let Some(dtw_cfg) = &cfg.dtw {
                let prepared = prepared.get_or_insert_with(|| {
                    prepare_sequences(&data.sequences, dtw_cfg).map_err(|e| e.to_string())
                });
                let rk = dtw_kind(kind);
                let rerank = match (&dist, &*prepared) {
                    (Ok(d), Ok(p)) => dtw_rerank(d, p, dtw_cfg).map_err(|e| e.to_string()),
                    (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                };
                drop(dist);
                if let Ok(r) = &rerank {
                    if r.widened_pairs > 0 {
                        out.flag(format!("{where_} / {rk}: {} DTW pairs needed band repair", r.widened_pairs));
                    }
                }
                let seed_parts = [subset.name.as_str(), f.as_str(), rk.as_str()];
                let scores = rerank
                    .map(|r| score_matrix(cfg, &r.ranked_matrix(), &data.labels, &data.ids, &seed_parts, &perception))
                    .map_err(Error::Degenerate);
                out.emit(&subset.name, &f, &rk, &names, scores);
            }
        }
        if let Some(k) = &cfg.clustering {
            let scores = features.map_err(Error::Degenerate).and_then(|set| {
                let n_classes = distinct_classes(data.labels.codes(), data.labels.num_classes());
                let clusters = k.k.unwrap_or(n_classes.max(1));
                let seed = derive_seed(cfg.seed, &[subset.name.as_str(), f.as_str(), "kmeans"]);
                let result = kmeans(&set, clusters, seed, k.max_iter)?;
                if !result.converged {
                    out.flag(format!("{where_}: k-means stopped after {} iterations without converging", result.iterations));
                }
                Ok(cluster_outcomes("kmeans", &result.assignment, &data.labels))
            });
            out.emit(&subset.name, &f, "euclidean", &kmeans_names, scores);
        }
    }

    if let Some(path) = &subset.assignments {
        let scores = read_assignments_csv(path)
            .and_then(|(ids, assign)| align_assignments(&ids, &assign, &data.ids))
            .map(|assign| cluster_outcomes("assigned", &assign, &data.labels));
        out.emit(&subset.name, EXTERNAL, EXTERNAL, &assigned_names, scores);
    }
}

/// Loads a precomputed matrix with its labels and drops classes smaller
/// than the configured minimum.
fn load_matrix_subset(cfg: &RunConfig, matrix: &Path, labels: &Path) -> Result<(DistanceMatrix, Vec<String>, LabelSet)> {
    let dist = read_matrix_file(matrix)?;
    let (ids, labels) = read_labels_csv(labels)?;
    if ids.len() != dist.len() {
        return Err(Error::DimensionMismatch {
            expected: dist.len(),
            found: ids.len(),
        });
    }
    let kept_codes = restrict_codes(labels.codes(), labels.num_classes(), cfg.min_class_size);
    let keep: Vec<usize> = (0..ids.len())
        .filter(|&i| !labels.is_valid(i) || kept_codes[i] == labels.codes()[i])
        .collect();
    if keep.len() == ids.len() {
        return Ok((dist, ids, labels));
    }
    log::info!("dropping {} items of undersized classes", ids.len() - keep.len());
    let ids: Vec<String> = keep.iter().map(|&i| ids[i].clone()).collect();
    let names: Vec<String> = keep.iter().map(|&i| labels.labels()[i].clone()).collect();
    Ok((dist.submatrix(&keep), ids, LabelSet::new(names)))
}

fn run_matrix_subset(cfg: &RunConfig, subset: &SubsetSpec, matrix: &Path, labels_path: &Path, out: &mut Assembler) {
    let names = matrix_score_names(cfg, subset);
    let assigned_names = prefixed("assigned", &CLUSTER_STATS);
    match load_matrix_subset(cfg, matrix, labels_path) {
        Ok((dist, ids, labels)) => {
            let kind = dist.metric().as_str();
            let perception = Perception::load(subset);
            let seed_parts = [subset.name.as_str(), PRECOMPUTED, kind];
            let scores = score_matrix(cfg, &dist, &labels, &ids, &seed_parts, &perception);
            out.emit(&subset.name, PRECOMPUTED, kind, &names, Ok(scores));
            if let Some(path) = &subset.assignments {
                let scores = read_assignments_csv(path)
                    .and_then(|(aids, assign)| align_assignments(&aids, &assign, &ids))
                    .map(|assign| cluster_outcomes("assigned", &assign, &labels));
                out.emit(&subset.name, EXTERNAL, EXTERNAL, &assigned_names, scores);
            }
        }
        Err(e) => {
            let msg = e.to_string();
            out.emit(&subset.name, PRECOMPUTED, "unknown", &names, Err(Error::DegenerateDataset(msg.clone())));
            if subset.assignments.is_some() {
                out.emit(&subset.name, EXTERNAL, EXTERNAL, &assigned_names, Err(Error::DegenerateDataset(msg)));
            }
        }
    }
}

fn base_metadata(cfg: &RunConfig) -> ReportMetadata {
    let mut notes = vec!["ties in probe and triplet tasks count as half correct".to_string()];
    if cfg.subsets.iter().any(|s| s.triplets.is_some()) {
        notes.push("triplet tasks report no correlation: the choice indicator is constant".into());
    }
    if cfg.dtw.is_some() {
        notes.push("`+dtw` kinds rank the DTW shortlist ahead of all remaining items".into());
    }
    ReportMetadata {
        engine_version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        nmi_normalization: "geometric".into(),
        sanitized_values: BTreeMap::new(),
        flags: Vec::new(),
        notes,
    }
}

/// Runs every configured combination. Failures become error rows.
pub fn run_pipeline(cfg: &RunConfig) -> EvalReport {
    let mut out = Assembler {
        report: EvalReport {
            metadata: base_metadata(cfg),
            rows: Vec::new(),
        },
    };
    for subset in &cfg.subsets {
        log::info!("evaluating subset {}", subset.name);
        match &subset.source {
            SubsetSource::Manifest(path) => run_manifest_subset(cfg, subset, path, &mut out),
            SubsetSource::Distances { matrix, labels } => run_matrix_subset(cfg, subset, matrix, labels, &mut out),
        }
    }
    out.report
}

/// Outcome of [`extract_distances`].
#[derive(Debug, Default)]
pub struct ExtractSummary {
    pub written: Vec<PathBuf>,
    pub failures: Vec<String>,
}

fn file_stem_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_=.".contains(c) { c } else { '_' })
        .collect()
}

/// Writes one matrix file plus a `clip_id,label` CSV per manifest subset,
/// feature configuration and distance kind into `output_dir/distances`.
pub fn extract_distances(cfg: &RunConfig) -> Result<ExtractSummary> {
    let dir = cfg.output_dir.join("distances");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut summary = ExtractSummary::default();
    for subset in &cfg.subsets {
        let SubsetSource::Manifest(path) = &subset.source else {
            log::info!("{}: already a distance matrix, skipping", subset.name);
            continue;
        };
        let data = match load_manifest_subset(cfg, &subset.name, path) {
            Ok(d) => d,
            Err(e) => {
                summary.failures.push(format!("{}: {e}", subset.name));
                continue;
            }
        };
        for fc in cfg.feature_configs() {
            let where_ = format!("{} / {fc}", subset.name);
            let features = match build_features(&data, fc, &mut Vec::new(), &where_) {
                Ok(f) => f,
                Err(e) => {
                    summary.failures.push(format!("{where_}: {e}"));
                    continue;
                }
            };
            for &kind in &cfg.metric_kinds {
                let stem = file_stem_safe(&format!("{}__{fc}__{kind}", subset.name));
                let written = matrix_for(cfg, &data.digest, fc, kind, &features).and_then(|m| {
                    let path = dir.join(format!("{stem}.bin"));
                    write_matrix_file(&path, &m)?;
                    let labels_path = dir.join(format!("{stem}.labels.csv"));
                    let mut w = csv::Writer::from_path(&labels_path)?;
                    w.write_record(["clip_id", "label"])?;
                    for (id, label) in data.ids.iter().zip(data.labels.labels()) {
                        w.write_record([id, label])?;
                    }
                    w.flush().map_err(|e| Error::io(&labels_path, e))?;
                    Ok(path)
                });
                match written {
                    Ok(p) => summary.written.push(p),
                    Err(e) => summary.failures.push(format!("{where_} / {kind}: {e}")),
                }
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_depend_on_every_part() {
        let a = derive_seed(1, &["s", "f", "cosine"]);
        assert_eq!(a, derive_seed(1, &["s", "f", "cosine"]));
        assert_ne!(a, derive_seed(2, &["s", "f", "cosine"]));
        assert_ne!(a, derive_seed(1, &["s", "fcosine"]));
        assert_ne!(a, derive_seed(1, &["s", "f", "spearman"]));
    }

    #[test]
    fn stem_sanitizing() {
        assert_eq!(file_stem_safe("a b/c|pca=8+x"), "a_b_c_pca=8_x");
    }
}
