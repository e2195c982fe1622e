//! TOML run configuration: raw deserialized form, command-line overrides,
//! and validation into a [`RunConfig`].

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{DEFAULT_PERMUTATIONS, MIN_PERMUTATIONS};
use crate::distances::MetricKind;
use crate::dtw::DtwConfig;
use crate::error::{Error, Result};
use crate::metrics::{MetricId, DEFAULT_MIN_CLASS_SIZE};
use crate::pooling::PoolingStrategy;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PCA_DIMS: usize = 100;
pub const DEFAULT_KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// A `pca_dims` entry: a positive integer or the word `none`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum PcaEntry {
    Dims(i64),
    Word(String),
}

impl PcaEntry {
    pub fn parse_cli(s: &str) -> Self {
        match s.trim().parse::<i64>() {
            Ok(d) => PcaEntry::Dims(d),
            Err(_) => PcaEntry::Word(s.trim().to_string()),
        }
    }

    fn resolve(&self) -> std::result::Result<Option<usize>, String> {
        match self {
            PcaEntry::Dims(d) if *d >= 1 => Ok(Some(*d as usize)),
            PcaEntry::Dims(d) => Err(format!("pca_dims entry {d} must be at least 1")),
            PcaEntry::Word(w) if w.eq_ignore_ascii_case("none") => Ok(None),
            PcaEntry::Word(w) => Err(format!("pca_dims entry `{w}` is neither an integer nor `none`")),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawSubset {
    pub name: Option<String>,
    pub manifest: Option<PathBuf>,
    pub distances: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub trials: Option<PathBuf>,
    pub triplets: Option<PathBuf>,
    pub assignments: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawFilter {
    pub min_class_size: Option<i64>,
    pub duration_percentile: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawPermutation {
    pub count: Option<i64>,
    pub metrics: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawNoise {
    pub fractions: Option<Vec<f64>>,
    pub metrics: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawClustering {
    pub k: Option<i64>,
    pub max_iter: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawDtw {
    pub band_radius: Option<f64>,
    pub stride: Option<i64>,
    pub shortlist_size: Option<i64>,
    pub pca_dims: Option<i64>,
    pub normalize_path: Option<bool>,
}

/// The configuration file as written, before defaults and validation.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema_version: Option<u32>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub cache: Option<bool>,
    pub pooling: Option<OneOrMany<String>>,
    pub pca_dims: Option<OneOrMany<PcaEntry>>,
    pub whiten: Option<bool>,
    pub metric_kinds: Option<OneOrMany<String>>,
    pub metrics: Option<OneOrMany<String>>,
    #[serde(default)]
    pub subset: Vec<RawSubset>,
    pub filter: Option<RawFilter>,
    pub permutation: Option<RawPermutation>,
    pub noise: Option<RawNoise>,
    pub clustering: Option<RawClustering>,
    pub dtw: Option<RawDtw>,
}

/// Command-line replacements for configuration values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub pooling: Option<Vec<String>>,
    pub pca_dims: Option<Vec<PcaEntry>>,
    pub metric_kinds: Option<Vec<String>>,
    pub permutations: Option<i64>,
    pub seed: Option<u64>,
    pub noise: Option<Vec<f64>>,
    pub rerank_dtw: bool,
    pub dtw_band: Option<f64>,
    pub dtw_stride: Option<i64>,
    pub dtw_shortlist: Option<i64>,
    pub dtw_pca: Option<i64>,
}

impl RawConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![format!("{origin}: {}", e.message().trim())]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn apply(&mut self, o: &Overrides) -> Vec<String> {
        let mut problems = Vec::new();
        if let Some(p) = &o.pooling {
            self.pooling = Some(OneOrMany::Many(p.clone()));
        }
        if let Some(p) = &o.pca_dims {
            self.pca_dims = Some(OneOrMany::Many(p.clone()));
        }
        if let Some(m) = &o.metric_kinds {
            self.metric_kinds = Some(OneOrMany::Many(m.clone()));
        }
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(n) = o.permutations {
            self.permutation.get_or_insert_with(RawPermutation::default).count = Some(n);
        }
        if let Some(f) = &o.noise {
            self.noise.get_or_insert_with(RawNoise::default).fractions = Some(f.clone());
        }
        let dtw_flags = o.dtw_band.is_some() || o.dtw_stride.is_some() || o.dtw_shortlist.is_some() || o.dtw_pca.is_some();
        if o.rerank_dtw {
            self.dtw.get_or_insert_with(RawDtw::default);
        }
        match self.dtw.as_mut() {
            Some(d) => {
                d.band_radius = o.dtw_band.or(d.band_radius);
                d.stride = o.dtw_stride.or(d.stride);
                d.shortlist_size = o.dtw_shortlist.or(d.shortlist_size);
                d.pca_dims = o.dtw_pca.or(d.pca_dims);
            }
            None if dtw_flags => problems.push("--dtw-* options need `--rerank dtw` or a [dtw] block".into()),
            None => {}
        }
        problems
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubsetSource {
    Manifest(PathBuf),
    Distances { matrix: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSpec {
    pub name: String,
    pub source: SubsetSource,
    pub trials: Option<PathBuf>,
    pub triplets: Option<PathBuf>,
    pub assignments: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationSettings {
    pub count: usize,
    pub metrics: Vec<MetricId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSettings {
    pub fractions: Vec<f64>,
    pub metrics: Vec<MetricId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringSettings {
    /// `None` uses the number of classes in the subset.
    pub k: Option<usize>,
    pub max_iter: usize,
}

/// One pooling plus PCA setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureConfig {
    pub pooling: PoolingStrategy,
    pub pca_dims: Option<usize>,
    pub whiten: bool,
}

impl fmt::Display for FeatureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|pca=", self.pooling)?;
        match self.pca_dims {
            Some(d) => write!(f, "{d}")?,
            None => f.write_str("none")?,
        }
        if self.whiten && self.pca_dims.is_some() {
            f.write_str("|whiten")?;
        }
        Ok(())
    }
}

/// A fully validated run description. Relative paths are resolved against
/// the configuration file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub cache: bool,
    pub subsets: Vec<SubsetSpec>,
    pub poolings: Vec<PoolingStrategy>,
    pub pca_dims: Vec<Option<usize>>,
    pub whiten: bool,
    pub metric_kinds: Vec<MetricKind>,
    pub metrics: Vec<MetricId>,
    pub min_class_size: usize,
    pub duration_percentile: f64,
    pub permutation: Option<PermutationSettings>,
    pub noise: Option<NoiseSettings>,
    pub clustering: Option<ClusteringSettings>,
    pub dtw: Option<DtwConfig>,
}

impl RunConfig {
    pub fn feature_configs(&self) -> Vec<FeatureConfig> {
        self.poolings
            .iter()
            .flat_map(|&pooling| {
                self.pca_dims.iter().map(move |&pca_dims| FeatureConfig {
                    pooling,
                    pca_dims,
                    whiten: self.whiten,
                })
            })
            .collect()
    }

    /// Reads, overrides and validates a configuration file.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let mut raw = RawConfig::load(path)?;
        let early = raw.apply(overrides);
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        validate(&raw, base, early)
    }
}

struct Collector(Vec<String>);

impl Collector {
    fn check<T>(&mut self, r: std::result::Result<T, String>) -> Option<T> {
        r.map_err(|e| self.0.push(e)).ok()
    }

    fn positive(&mut self, what: &str, v: Option<i64>, default: usize) -> usize {
        match v {
            None => default,
            Some(x) if x >= 1 => x as usize,
            Some(x) => {
                self.0.push(format!("{what} = {x} must be at least 1"));
                default
            }
        }
    }

    fn metric_list(&mut self, what: &str, names: &[String]) -> Vec<MetricId> {
        if names.is_empty() {
            self.0.push(format!("{what}: list is empty"));
        }
        let mut out = Vec::new();
        for name in names {
            match name.parse::<MetricId>() {
                Ok(id) if !out.contains(&id) => out.push(id),
                Ok(_) => self.0.push(format!("{what}: metric `{name}` listed twice")),
                Err(e) => self.0.push(format!("{what}: {e}")),
            }
        }
        out
    }

    fn existing(&mut self, what: &str, base: &Path, p: &Path) -> PathBuf {
        let full = if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        if !full.is_file() {
            self.0.push(format!("{what}: file {} does not exist", full.display()));
        }
        full
    }
}

fn default_metric_names() -> Vec<String> {
    vec!["p@1".into(), "p@5".into(), "gsr".into()]
}

/// Validates a raw configuration, reporting every problem at once.
pub fn validate(raw: &RawConfig, base: &Path, early: Vec<String>) -> Result<RunConfig> {
    let mut c = Collector(early);

    match raw.schema_version {
        None => c.0.push("schema_version is required".into()),
        Some(v) if v != SCHEMA_VERSION => {
            c.0.push(format!("schema_version {v} is not supported (expected {SCHEMA_VERSION})"))
        }
        Some(_) => {}
    }
    if raw.seed.is_none() {
        c.0.push("seed is required".into());
    }
    let output_dir = match &raw.output_dir {
        Some(p) if p.is_relative() => base.join(p),
        Some(p) => p.clone(),
        None => base.join("results"),
    };

    let pooling_names = raw.pooling.as_ref().map(OneOrMany::to_vec);
    let mut poolings = Vec::new();
    match pooling_names {
        None => poolings.push(PoolingStrategy::default()),
        Some(names) => {
            if names.is_empty() {
                c.0.push("pooling: list is empty".into());
            }
            for n in names {
                if let Some(p) = c.check(n.parse::<PoolingStrategy>().map_err(|e| format!("pooling: {e}"))) {
                    if poolings.contains(&p) {
                        c.0.push(format!("pooling: `{n}` listed twice"));
                    } else {
                        poolings.push(p);
                    }
                }
            }
        }
    }

    let mut pca_dims = Vec::new();
    let entries = raw
        .pca_dims
        .as_ref()
        .map(OneOrMany::to_vec)
        .unwrap_or_else(|| vec![PcaEntry::Dims(DEFAULT_PCA_DIMS as i64)]);
    if entries.is_empty() {
        c.0.push("pca_dims: list is empty".into());
    }
    for e in &entries {
        if let Some(d) = c.check(e.resolve()) {
            if pca_dims.contains(&d) {
                c.0.push(format!("pca_dims: {e:?} listed twice"));
            } else {
                pca_dims.push(d);
            }
        }
    }

    let kind_names = raw
        .metric_kinds
        .as_ref()
        .map(OneOrMany::to_vec)
        .unwrap_or_else(|| vec!["cosine".into()]);
    if kind_names.is_empty() {
        c.0.push("metric_kinds: list is empty".into());
    }
    let mut metric_kinds = Vec::new();
    for n in &kind_names {
        if let Some(k) = c.check(n.parse::<MetricKind>().map_err(|e| format!("metric_kinds: {e}"))) {
            if metric_kinds.contains(&k) {
                c.0.push(format!("metric_kinds: `{n}` listed twice"));
            } else {
                metric_kinds.push(k);
            }
        }
    }

    let metric_names = raw
        .metrics
        .as_ref()
        .map(OneOrMany::to_vec)
        .unwrap_or_else(default_metric_names);
    let metrics = c.metric_list("metrics", &metric_names);

    let filter = raw.filter.clone().unwrap_or_default();
    let min_class_size = c.positive("filter.min_class_size", filter.min_class_size, DEFAULT_MIN_CLASS_SIZE);
    let duration_percentile = filter.duration_percentile.unwrap_or(100.0);
    if !(duration_percentile > 0.0 && duration_percentile <= 100.0) {
        c.0.push(format!("filter.duration_percentile {duration_percentile} outside (0, 100]"));
    }

    let permutation = raw.permutation.as_ref().map(|p| {
        let count = c.positive("permutation.count", p.count, DEFAULT_PERMUTATIONS);
        if count < MIN_PERMUTATIONS {
            c.0.push(format!("permutation.count {count} is below the minimum of {MIN_PERMUTATIONS}"));
        }
        let names = p.metrics.clone().unwrap_or_else(default_metric_names);
        PermutationSettings {
            count,
            metrics: c.metric_list("permutation.metrics", &names),
        }
    });

    let noise = raw.noise.as_ref().map(|n| {
        let fractions = n.fractions.clone().unwrap_or_else(|| vec![0.1, 0.2]);
        if fractions.is_empty() {
            c.0.push("noise.fractions: list is empty".into());
        }
        for f in &fractions {
            if !(0.0..1.0).contains(f) {
                c.0.push(format!("noise.fractions: {f} outside [0, 1)"));
            }
        }
        if fractions.windows(2).any(|w| w[0] >= w[1]) {
            c.0.push("noise.fractions must be strictly ascending".into());
        }
        let names = n.metrics.clone().unwrap_or_else(|| vec!["p@1".into(), "gsr".into()]);
        NoiseSettings {
            fractions,
            metrics: c.metric_list("noise.metrics", &names),
        }
    });

    let clustering = raw.clustering.as_ref().map(|k| ClusteringSettings {
        k: k.k.map(|_| c.positive("clustering.k", k.k, 1)),
        max_iter: c.positive("clustering.max_iter", k.max_iter, DEFAULT_KMEANS_MAX_ITER),
    });

    let dtw = raw.dtw.as_ref().map(|d| {
        let defaults = DtwConfig::default();
        let pca = match d.pca_dims {
            None => defaults.pca_dims,
            Some(x) if x >= 0 => x as usize,
            Some(x) => {
                c.0.push(format!("dtw.pca_dims = {x} must be nonnegative (0 skips frame PCA)"));
                defaults.pca_dims
            }
        };
        let cfg = DtwConfig {
            band_radius: d.band_radius.unwrap_or(defaults.band_radius),
            stride: c.positive("dtw.stride", d.stride, defaults.stride),
            shortlist_size: c.positive("dtw.shortlist_size", d.shortlist_size, defaults.shortlist_size),
            pca_dims: pca,
            normalize_path: d.normalize_path.unwrap_or(defaults.normalize_path),
        };
        if let Err(e) = cfg.validate() {
            c.0.push(format!("dtw: {e}"));
        }
        cfg
    });

    if raw.subset.is_empty() {
        c.0.push("at least one [[subset]] is required".into());
    }
    let mut subsets: Vec<SubsetSpec> = Vec::new();
    let mut seen_names: Vec<String> = Vec::new();
    for (i, s) in raw.subset.iter().enumerate() {
        let name = match &s.name {
            Some(n) if !n.trim().is_empty() => n.trim().to_string(),
            _ => {
                c.0.push(format!("subset #{}: name is required", i + 1));
                format!("#{}", i + 1)
            }
        };
        if seen_names.contains(&name) {
            c.0.push(format!("subset `{name}`: name used twice"));
        }
        seen_names.push(name.clone());
        let what = format!("subset `{name}`");
        let source = match (&s.manifest, &s.distances, &s.labels) {
            (Some(m), None, None) => Some(SubsetSource::Manifest(c.existing(&what, base, m))),
            (None, Some(d), Some(l)) => Some(SubsetSource::Distances {
                matrix: c.existing(&what, base, d),
                labels: c.existing(&what, base, l),
            }),
            _ => {
                c.0.push(format!("{what}: give either `manifest` or both `distances` and `labels`"));
                None
            }
        };
        if dtw.is_some() && matches!(source, Some(SubsetSource::Distances { .. })) {
            log::warn!("{what}: precomputed distances cannot be re-ranked with DTW");
        }
        let trials = s.trials.as_ref().map(|p| c.existing(&what, base, p));
        let triplets = s.triplets.as_ref().map(|p| c.existing(&what, base, p));
        let assignments = s.assignments.as_ref().map(|p| c.existing(&what, base, p));
        if let Some(source) = source {
            subsets.push(SubsetSpec {
                name,
                source,
                trials,
                triplets,
                assignments,
            });
        }
    }

    if !c.0.is_empty() {
        return Err(Error::Config(c.0));
    }
    Ok(RunConfig {
        seed: raw.seed.expect("checked"),
        output_dir,
        cache: raw.cache.unwrap_or(true),
        subsets,
        poolings,
        pca_dims,
        whiten: raw.whiten.unwrap_or(false),
        metric_kinds,
        metrics,
        min_class_size,
        duration_percentile,
        permutation,
        noise,
        clustering,
        dtw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn messages(text: &str, base: &Path) -> Vec<String> {
        let raw = RawConfig::from_toml(text, "test").unwrap();
        match validate(&raw, base, Vec::new()) {
            Err(Error::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn every_violation_is_listed() {
        let dir = tempfile::tempdir().unwrap();
        let m = messages(
            r#"
            pooling = ["nope"]
            pca_dims = [0, "all"]
            metrics = ["p@0", "gsr"]
            [filter]
            duration_percentile = 0.0
            [permutation]
            count = 10
            [[subset]]
            name = "a"
            manifest = "missing.csv"
            "#,
            dir.path(),
        );
        let joined = m.join("\n");
        for needle in [
            "schema_version",
            "seed",
            "pooling",
            "pca_dims entry 0",
            "`all`",
            "p@0",
            "duration_percentile",
            "below the minimum",
            "missing.csv",
        ] {
            assert!(joined.contains(needle), "`{needle}` not in:\n{joined}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RawConfig::from_toml("schema_version = 1\nseed = 1\ncolour = 3\n", "x").unwrap_err();
        assert!(err.to_string().contains("colour"));
        let err = RawConfig::from_toml("[dtw]\nband = 0.2\n", "x").unwrap_err();
        assert!(err.to_string().contains("band"));
    }

    #[test]
    fn defaults_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.csv"), "clip_id,label,duration_seconds,embedding_path\n").unwrap();
        let mut raw = RawConfig::from_toml(
            "schema_version = 1\nseed = 3\npca_dims = \"none\"\n[[subset]]\nname = \"s\"\nmanifest = \"m.csv\"\n",
            "x",
        )
        .unwrap();
        let cfg = validate(&raw, dir.path(), Vec::new()).unwrap();
        assert_eq!(cfg.pca_dims, vec![None]);
        assert_eq!(cfg.poolings, vec![PoolingStrategy::default()]);
        assert_eq!(cfg.metric_kinds, vec![MetricKind::Cosine]);
        assert_eq!(cfg.metrics, vec![MetricId::P_AT_1, MetricId::P_AT_5, MetricId::Gsr]);
        assert!(cfg.permutation.is_none() && cfg.dtw.is_none());
        assert_eq!(cfg.output_dir, dir.path().join("results"));
        assert_eq!(cfg.feature_configs()[0].to_string(), "mean_time_incl_pad+mean_feat|pca=none");

        let problems = raw.apply(&Overrides {
            pca_dims: Some(vec![PcaEntry::parse_cli("8"), PcaEntry::parse_cli("none")]),
            metric_kinds: Some(vec!["spearman".into(), "euclidean".into()]),
            permutations: Some(200),
            seed: Some(9),
            rerank_dtw: true,
            dtw_stride: Some(1),
            ..Overrides::default()
        });
        assert!(problems.is_empty());
        let cfg = validate(&raw, dir.path(), problems).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.pca_dims, vec![Some(8), None]);
        assert_eq!(cfg.permutation.as_ref().unwrap().count, 200);
        assert_eq!(cfg.dtw.unwrap().stride, 1);
        assert_eq!(cfg.feature_configs().len(), 2);
    }

    #[test]
    fn dtw_flags_without_rerank_are_an_error() {
        let mut raw = RawConfig::default();
        let problems = raw.apply(&Overrides {
            dtw_band: Some(0.2),
            ..Overrides::default()
        });
        assert_eq!(problems.len(), 1);
    }

    #[test]
    fn subset_sources_are_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let m = messages(
            "schema_version = 1\nseed = 1\n[[subset]]\nname = \"a\"\nmanifest = \"m.csv\"\ndistances = \"d.bin\"\n[[subset]]\nname = \"a\"\ndistances = \"d.bin\"\n",
            dir.path(),
        );
        assert_eq!(m.iter().filter(|s| s.contains("either")).count(), 2);
        assert!(m.iter().any(|s| s.contains("used twice")));
    }
}
