//! Report rows, metadata and their CSV/JSON renderings.
//!
//! `report.csv` columns, in order: `subset, feature_config, metric_kind,
//! score_name, value, error`. Scores in `[0, 1]` are written as percentages
//! with two decimals, p-values in scientific notation with four decimals,
//! and everything else with four decimals. `report.json` keeps full
//! precision.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub subset: String,
    pub feature_config: String,
    pub metric_kind: String,
    pub score_name: String,
    pub value: Option<f64>,
    pub error: Option<String>,
}

impl ReportRow {
    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub engine_version: String,
    pub schema_version: u32,
    pub seed: u64,
    pub nmi_normalization: String,
    /// Non-finite values replaced while loading, per subset.
    pub sanitized_values: BTreeMap<String, usize>,
    /// Conditions that did not stop a computation but changed its inputs.
    pub flags: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn error_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_error()).count()
    }

    pub fn score_rows(&self) -> usize {
        self.rows.len() - self.error_rows()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["subset", "feature_config", "metric_kind", "score_name", "value", "error"])?;
        for r in &self.rows {
            let value = r.value.map(|v| format_value(&r.score_name, v)).unwrap_or_default();
            w.write_record([
                r.subset.as_str(),
                &r.feature_config,
                &r.metric_kind,
                &r.score_name,
                &value,
                r.error.as_deref().unwrap_or(""),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("report.csv", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `report.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("report.csv");
        fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join("report.json");
        fs::write(&json_path, self.to_json()?).map_err(|e| Error::io(&json_path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueStyle {
    Percent,
    PValue,
    Plain,
}

const FRACTION_STATS: [&str; 5] = ["nmi", "purity", "ari", "weighted_purity", "accuracy"];

/// Chooses the CSV rendering of a score from its name.
pub fn value_style(score_name: &str) -> ValueStyle {
    if score_name.ends_with("p_value") {
        return ValueStyle::PValue;
    }
    let mut parts = score_name.split('.');
    let head = parts.next().unwrap_or_default();
    let metric_part = if head.starts_with("noise@") {
        score_name.split_once('@').map(|x| x.1).and_then(|rest| {
            // `noise@0.1.p@1`: the fraction itself contains a dot
            rest.char_indices()
                .filter(|&(_, c)| c == '.')
                .map(|(i, _)| &rest[i + 1..])
                .find(|tail| tail.parse::<MetricId>().is_ok())
        })
    } else {
        Some(head)
    };
    if let Some(id) = metric_part.and_then(|m| m.parse::<MetricId>().ok()) {
        return if id.is_fraction() { ValueStyle::Percent } else { ValueStyle::Plain };
    }
    let last = score_name.rsplit('.').next().unwrap_or_default();
    if FRACTION_STATS.contains(&last) {
        ValueStyle::Percent
    } else {
        ValueStyle::Plain
    }
}

pub fn format_value(score_name: &str, v: f64) -> String {
    match value_style(score_name) {
        ValueStyle::Percent => format!("{:.2}", v * 100.0),
        ValueStyle::PValue => format!("{v:.4e}"),
        ValueStyle::Plain => format!("{v:.4}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn styles_follow_score_names() {
        assert_eq!(value_style("p@1"), ValueStyle::Percent);
        assert_eq!(value_style("p@5.baseline_mean"), ValueStyle::Percent);
        assert_eq!(value_style("gsr.ci_high"), ValueStyle::Plain);
        assert_eq!(value_style("gsr.p_value"), ValueStyle::PValue);
        assert_eq!(value_style("noise@0.1.p@1"), ValueStyle::Percent);
        assert_eq!(value_style("noise@0.25.gsr"), ValueStyle::Plain);
        assert_eq!(value_style("kmeans.ari"), ValueStyle::Percent);
        assert_eq!(value_style("probe.spearman_rho"), ValueStyle::Plain);
        assert_eq!(value_style("silhouette"), ValueStyle::Plain);
        assert_eq!(format_value("p@1", 0.123456), "12.35");
        assert_eq!(format_value("probe.p_value", 0.000953674316), "9.5367e-4");
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let report = EvalReport {
            metadata: ReportMetadata {
                seed: 4,
                ..ReportMetadata::default()
            },
            rows: vec![
                ReportRow {
                    subset: "s".into(),
                    feature_config: "f".into(),
                    metric_kind: "cosine".into(),
                    score_name: "gsr".into(),
                    value: Some(71.234567891234),
                    error: None,
                },
                ReportRow {
                    subset: "s".into(),
                    feature_config: "f".into(),
                    metric_kind: "cosine".into(),
                    score_name: "csr".into(),
                    value: None,
                    error: Some("degenerate input: one class".into()),
                },
            ],
        };
        let csv = report.to_csv().unwrap();
        assert_eq!(
            csv,
            "subset,feature_config,metric_kind,score_name,value,error\n\
             s,f,cosine,gsr,71.2346,\n\
             s,f,cosine,csr,,degenerate input: one class\n"
        );
        let back = EvalReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
        assert_eq!((back.score_rows(), back.error_rows()), (1, 1));
    }
}
