mod common;

use std::path::Path;

use common::{write_file, write_sequence_dataset, SyntheticSpec};
use embedgeom::metrics::MetricId;
use embedgeom::pipeline::{
    extract_distances, matrix_score_names, metric_correlation, run_pipeline, EvalReport, Overrides, RunConfig,
};
use embedgeom::Error;

fn load(config: &Path) -> RunConfig {
    RunConfig::load(config, &Overrides::default()).unwrap()
}

fn config_with(dir: &Path, body: &str) -> std::path::PathBuf {
    write_file(&dir.join("run.toml"), &format!("schema_version = 1\nseed = 5\noutput_dir = \"out\"\n{body}"))
}

#[test]
fn single_combination_yields_one_row() {
    let dir = tempfile::tempdir().unwrap();
    write_sequence_dataset(&dir.path().join("data"), &SyntheticSpec::default());
    let cfg = config_with(
        dir.path(),
        "pca_dims = \"none\"\nmetrics = [\"p@1\"]\n[[subset]]\nname = \"s\"\nmanifest = \"data/manifest.csv\"\n",
    );
    let report = run_pipeline(&load(&cfg));
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!(
        (row.subset.as_str(), row.metric_kind.as_str(), row.score_name.as_str()),
        ("s", "cosine", "p@1")
    );
    assert!(row.value.unwrap() > 0.5, "{row:?}");
    assert_eq!(report.metadata.sanitized_values["s"], 0);
}

fn full_body(dir: &Path) -> String {
    write_sequence_dataset(&dir.join("data"), &SyntheticSpec::default());
    write_file(
        &dir.join("trials.csv"),
        "x_id,a_id,b_id,decision\nc0_0,c0_1,c1_0,A\nc1_2,c2_0,c1_3,B\nc2_1,c2_2,c3_0,A\nc3_3,c0_4,c3_4,B\nc0_2,c0_3,c3_1,A\n",
    );
    write_file(
        &dir.join("triplets.csv"),
        "anchor_id,positive_id,negative_id\nc0_0,c0_1,c1_0\nc1_1,c1_2,c2_0\nc2_3,c2_4,c0_5\n",
    );
    let mut assign = String::from("clip_id,cluster_id\n");
    for c in 0..4 {
        for k in 0..6 {
            assign.push_str(&format!("c{c}_{k},{}\n", if k == 0 { (c + 1) % 4 } else { c }));
        }
    }
    write_file(&dir.join("assign.csv"), &assign);
    r#"
pooling = ["mean_time_incl_pad+mean_feat", "max_time"]
pca_dims = [4, "none"]
metric_kinds = ["cosine", "spearman"]
metrics = ["p@1", "p@5", "gsr", "csr", "cs", "cscf", "silhouette"]
[permutation]
count = 100
metrics = ["p@1", "gsr"]
[noise]
fractions = [0.1, 0.2]
[clustering]
[dtw]
stride = 1
shortlist_size = 5
pca_dims = 3
[[subset]]
name = "seq"
manifest = "data/manifest.csv"
trials = "trials.csv"
triplets = "triplets.csv"
assignments = "assign.csv"
"#
    .to_string()
}

#[test]
fn every_configured_score_is_present_exactly_once() {
    let dir = tempfile::tempdir().unwrap();
    let body = full_body(dir.path());
    let cfg = load(&config_with(dir.path(), &body));
    let report = run_pipeline(&cfg);

    let per_matrix = matrix_score_names(&cfg, &cfg.subsets[0]).len();
    assert_eq!(per_matrix, 7 + 2 * 4 + 2 * 2 + 4 + 2);
    let features = 4;
    let kinds = 2 * 2;
    let expected = features * kinds * per_matrix + features * 4 + 4;
    assert_eq!(report.rows.len(), expected);
    assert_eq!(report.score_rows() + report.error_rows(), expected);

    let mut keys: Vec<_> = report
        .rows
        .iter()
        .map(|r| (&r.subset, &r.feature_config, &r.metric_kind, &r.score_name))
        .collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), expected);
    for r in &report.rows {
        assert!(r.value.is_some() != r.error.is_some(), "{r:?}");
    }
    assert!(report.rows.iter().any(|r| r.metric_kind == "spearman+dtw"));
    assert!(report.metadata.flags.iter().any(|f| f.contains("padded")));

    let assigned = report
        .rows
        .iter()
        .find(|r| r.score_name == "assigned.purity")
        .unwrap();
    assert!((assigned.value.unwrap_or_else(|| panic!("{assigned:?}")) - 20.0 / 24.0).abs() < 1e-12);

    let perfect_p1 = report
        .rows
        .iter()
        .filter(|r| r.score_name == "p@1")
        .filter_map(|r| r.value)
        .fold(0.0f64, f64::max);
    assert!(perfect_p1 > 0.8);
}

#[test]
fn reruns_are_byte_identical_with_and_without_cache() {
    let dir = tempfile::tempdir().unwrap();
    let body = full_body(dir.path());
    let cfg = load(&config_with(dir.path(), &body));

    let first = run_pipeline(&cfg).to_json().unwrap();
    let cache = cfg.output_dir.join("cache");
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);
    let second = run_pipeline(&cfg).to_json().unwrap();
    assert_eq!(first, second);

    std::fs::remove_dir_all(&cache).unwrap();
    let third = run_pipeline(&cfg).to_json().unwrap();
    assert_eq!(first, third);

    let mut no_cache = cfg.clone();
    no_cache.cache = false;
    no_cache.output_dir = dir.path().join("elsewhere");
    assert_eq!(run_pipeline(&no_cache).to_json().unwrap(), first);
    assert!(!no_cache.output_dir.join("cache").exists());
}

#[test]
fn a_different_seed_changes_only_randomized_scores() {
    let dir = tempfile::tempdir().unwrap();
    let body = full_body(dir.path());
    let cfg = load(&config_with(dir.path(), &body));
    let mut other = cfg.clone();
    other.seed = 6;
    let (a, b) = (run_pipeline(&cfg), run_pipeline(&other));
    for (x, y) in a.rows.iter().zip(&b.rows) {
        let randomized = x.score_name.contains('.') && !x.score_name.starts_with("probe")
            && !x.score_name.starts_with("triplet")
            && !x.score_name.starts_with("assigned");
        if !randomized {
            assert_eq!(x, y);
        }
    }
}

#[test]
fn missing_paths_fail_validation_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_with(
        dir.path(),
        "[[subset]]\nname = \"a\"\nmanifest = \"nope.csv\"\n[[subset]]\nname = \"b\"\ndistances = \"d.bin\"\nlabels = \"l.csv\"\n",
    );
    match RunConfig::load(&cfg, &Overrides::default()) {
        Err(Error::Config(msgs)) => {
            assert_eq!(msgs.len(), 3, "{msgs:?}");
        }
        other => panic!("{other:?}"),
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn a_broken_subset_does_not_stop_the_others() {
    let dir = tempfile::tempdir().unwrap();
    write_sequence_dataset(&dir.path().join("good"), &SyntheticSpec::default());
    write_sequence_dataset(&dir.path().join("bad"), &SyntheticSpec::default());
    std::fs::write(dir.path().join("bad/c2_3.bin"), b"GEOMEVL1 garbage").unwrap();
    let cfg = config_with(
        dir.path(),
        "pca_dims = 3\n[[subset]]\nname = \"bad\"\nmanifest = \"bad/manifest.csv\"\n[[subset]]\nname = \"good\"\nmanifest = \"good/manifest.csv\"\n",
    );
    let report = run_pipeline(&load(&cfg));
    assert_eq!(report.rows.len(), 6);
    for r in &report.rows {
        if r.subset == "bad" {
            assert!(r.error.as_deref().unwrap().contains("c2_3"), "{r:?}");
        } else {
            assert!(r.value.is_some(), "{r:?}");
        }
    }
}

#[test]
fn degenerate_scores_become_error_rows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        classes: 1,
        per_class: 8,
        ..SyntheticSpec::default()
    };
    write_sequence_dataset(&dir.path().join("data"), &spec);
    let cfg = config_with(
        dir.path(),
        "metrics = [\"p@1\", \"gsr\"]\n[[subset]]\nname = \"one\"\nmanifest = \"data/manifest.csv\"\n",
    );
    let report = run_pipeline(&load(&cfg));
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.rows[0].value, Some(1.0));
    assert!(report.rows[1].error.as_deref().unwrap().contains("degenerate"));
}

#[test]
fn extracted_matrices_evaluate_like_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_sequence_dataset(&dir.path().join("data"), &SyntheticSpec::default());
    let cfg = config_with(
        dir.path(),
        "pca_dims = 5\nmetric_kinds = \"euclidean\"\nmetrics = [\"p@1\", \"gsr\", \"cscf\"]\n[[subset]]\nname = \"s\"\nmanifest = \"data/manifest.csv\"\n",
    );
    let cfg = load(&cfg);
    let summary = extract_distances(&cfg).unwrap();
    assert!(summary.failures.is_empty());
    assert_eq!(summary.written.len(), 1);
    let matrix = &summary.written[0];
    let labels = matrix.with_extension("labels.csv");
    assert!(labels.is_file());

    let direct = run_pipeline(&cfg);
    let second = write_file(
        &dir.path().join("second.toml"),
        &format!(
            "schema_version = 1\nseed = 5\nmetrics = [\"p@1\", \"gsr\", \"cscf\"]\n[[subset]]\nname = \"s\"\ndistances = \"{}\"\nlabels = \"{}\"\n",
            matrix.display(),
            labels.display()
        ),
    );
    let from_matrix = run_pipeline(&load(&second));
    assert_eq!(from_matrix.rows.len(), 3);
    for (a, b) in direct.rows.iter().zip(&from_matrix.rows) {
        assert_eq!(b.feature_config, "precomputed");
        assert_eq!(b.metric_kind, "euclidean");
        assert_eq!(a.value, b.value);
    }
}

#[test]
fn correlations_over_feature_configs() {
    let dir = tempfile::tempdir().unwrap();
    write_sequence_dataset(&dir.path().join("data"), &SyntheticSpec::default());
    let cfg = config_with(
        dir.path(),
        r#"
pooling = ["mean_time_incl_pad", "max_time", "last_time", "first_time"]
pca_dims = "none"
metric_kinds = ["cosine", "euclidean"]
metrics = ["p@1", "gsr", "csr", "cscf"]
[[subset]]
name = "s"
manifest = "data/manifest.csv"
"#,
    );
    let report = run_pipeline(&load(&cfg));
    assert_eq!(report.error_rows(), 0);
    let m = metric_correlation(&report).unwrap();
    assert_eq!(m.configs.len(), 8);
    for i in 0..m.names.len() {
        assert_eq!(m.rho[i][i], Some(1.0));
        for j in 0..m.names.len() {
            assert_eq!(m.rho[i][j], m.rho[j][i]);
            if let Some(r) = m.rho[i][j] {
                assert!((-1.0..=1.0).contains(&r));
            }
        }
    }

    let json = EvalReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(metric_correlation(&json).unwrap(), m);
    assert!(m.names.contains(&MetricId::Cscf.to_string()));
}
