//! Rank agreement between score names across feature configurations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricId;
use crate::stats::spearman_rho;

use super::report::EvalReport;

pub const MIN_CONFIGS: usize = 3;

/// Symmetric matrix of Spearman correlations. `None` marks pairs that share
/// fewer than [`MIN_CONFIGS`] configurations or involve a constant vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// `(feature_config, metric_kind)` pairs in sorted order.
    pub configs: Vec<(String, String)>,
    pub rho: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.rho[i][j]
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["score".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.names.iter().zip(&self.rho) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.map(|x| format!("{x:.6}")).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("correlations.csv", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

/// Averages each base score over subsets per configuration, then correlates
/// score names by Spearman's rho. CSCF enters as `1 - CSCF` so that every
/// score reads "higher is better".
///
/// A configuration contributes to a score only when it has a value for every
/// subset in which that score was computed.
pub fn metric_correlation(report: &EvalReport) -> Result<CorrelationMatrix> {
    let mut cells: BTreeMap<(MetricId, (String, String)), BTreeMap<String, f64>> = BTreeMap::new();
    let mut subsets_of: BTreeMap<MetricId, BTreeSet<String>> = BTreeMap::new();
    let mut configs = BTreeSet::new();
    for row in &report.rows {
        let (Ok(id), Some(v)) = (row.score_name.parse::<MetricId>(), row.value) else {
            continue;
        };
        if id.to_string() != row.score_name {
            continue;
        }
        let cfg = (row.feature_config.clone(), row.metric_kind.clone());
        configs.insert(cfg.clone());
        subsets_of.entry(id).or_default().insert(row.subset.clone());
        let v = if id == MetricId::Cscf { 1.0 - v } else { v };
        cells.entry((id, cfg)).or_default().insert(row.subset.clone(), v);
    }
    if configs.len() < MIN_CONFIGS {
        return Err(Error::Parameter(format!(
            "metric correlation needs at least {MIN_CONFIGS} configurations, found {}",
            configs.len()
        )));
    }
    let configs: Vec<(String, String)> = configs.into_iter().collect();
    let ids: Vec<MetricId> = subsets_of.keys().copied().collect();

    let averages: Vec<Vec<Option<f64>>> = ids
        .iter()
        .map(|id| {
            let wanted = &subsets_of[id];
            configs
                .iter()
                .map(|cfg| {
                    let per_subset = cells.get(&(*id, cfg.clone()))?;
                    (per_subset.len() == wanted.len())
                        .then(|| per_subset.values().sum::<f64>() / per_subset.len() as f64)
                })
                .collect()
        })
        .collect();

    let m = ids.len();
    let mut rho = vec![vec![None; m]; m];
    for a in 0..m {
        for b in a..m {
            let (x, y): (Vec<f64>, Vec<f64>) = averages[a]
                .iter()
                .zip(&averages[b])
                .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                .unzip();
            if x.len() < MIN_CONFIGS {
                continue;
            }
            let r = if a == b { Some(1.0) } else { spearman_rho(&x, &y) };
            rho[a][b] = r;
            rho[b][a] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: ids.iter().map(MetricId::to_string).collect(),
        configs,
        rho,
    })
}
