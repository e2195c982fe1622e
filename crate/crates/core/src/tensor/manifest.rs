use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::format::{decode_tensor, sanitize};
use super::SequenceEmbedding;
use crate::error::{Error, Result};
use crate::stats::percentile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub clip_id: String,
    pub label: String,
    pub duration_seconds: f64,
    pub embedding_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub subset_name: String,
    pub items: Vec<ManifestItem>,
}

impl DatasetManifest {
    pub fn new(subset_name: impl Into<String>, items: Vec<ManifestItem>) -> Self {
        Self {
            subset_name: subset_name.into(),
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.items.iter().map(|i| i.label.clone()).collect()
    }

    pub fn clip_ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.clip_id.clone()).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for item in &self.items {
            w.serialize(item)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a `clip_id,label,duration_seconds,embedding_path` CSV. Relative
/// embedding paths resolve against the manifest's directory.
pub fn read_manifest(path: &Path, subset_name: &str) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
        ));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::Reader::from_path(path)?;
    let mut items = Vec::new();
    for (line, row) in reader.deserialize::<ManifestItem>().enumerate() {
        let mut item = row?;
        if !item.duration_seconds.is_finite() || item.duration_seconds <= 0.0 {
            return Err(Error::format(
                path.display().to_string(),
                format!(
                    "row {}: duration {} for clip `{}` must be positive",
                    line + 1,
                    item.duration_seconds,
                    item.clip_id
                ),
            ));
        }
        if item.embedding_path.is_relative() {
            item.embedding_path = base.join(&item.embedding_path);
        }
        items.push(item);
    }
    Ok(DatasetManifest::new(subset_name, items))
}

/// Drops over-long clips first (duration strictly above the linear-interpolation
/// percentile), then whole classes that fall below `min_class_size`.
pub fn filter_dataset(
    manifest: &DatasetManifest,
    min_class_size: usize,
    duration_percentile: f64,
) -> Result<DatasetManifest> {
    if manifest.is_empty() {
        return Err(Error::DegenerateDataset("manifest is empty".into()));
    }
    if min_class_size < 1 {
        return Err(Error::Parameter("min_class_size must be at least 1".into()));
    }
    if !(duration_percentile > 0.0 && duration_percentile <= 100.0) {
        return Err(Error::Parameter(format!(
            "duration percentile {duration_percentile} outside (0, 100]"
        )));
    }
    let durations: Vec<f64> = manifest.items.iter().map(|i| i.duration_seconds).collect();
    let cutoff = percentile(&durations, duration_percentile).expect("nonempty");
    let kept: Vec<&ManifestItem> = manifest
        .items
        .iter()
        .filter(|i| i.duration_seconds <= cutoff)
        .collect();

    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for item in &kept {
        *sizes.entry(item.label.as_str()).or_default() += 1;
    }
    let items: Vec<ManifestItem> = kept
        .into_iter()
        .filter(|i| sizes[i.label.as_str()] >= min_class_size)
        .cloned()
        .collect();
    if items.is_empty() {
        return Err(Error::DegenerateDataset(format!(
            "no items of subset `{}` survive filtering (min_class_size={min_class_size}, \
             percentile={duration_percentile})",
            manifest.subset_name
        )));
    }
    Ok(DatasetManifest::new(manifest.subset_name.clone(), items))
}

/// Sequences loaded from a manifest, in manifest order.
#[derive(Debug, Clone)]
pub struct LoadedSequences {
    pub sequences: Vec<SequenceEmbedding>,
    /// Number of non-finite values replaced during loading.
    pub sanitized_values: usize,
    /// SHA-256 over the raw bytes of every file, in order.
    pub content_digest: String,
}

pub fn load_sequence_set(manifest: &DatasetManifest) -> Result<LoadedSequences> {
    let mut hasher = Sha256::new();
    let mut sequences = Vec::with_capacity(manifest.len());
    let mut sanitized_values = 0;
    for item in &manifest.items {
        let bytes = fs::read(&item.embedding_path).map_err(|source| Error::ClipIo {
            clip_id: item.clip_id.clone(),
            path: item.embedding_path.clone(),
            source,
        })?;
        hasher.update(item.clip_id.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);

        let context = format!("clip `{}` ({})", item.clip_id, item.embedding_path.display());
        let mut file = decode_tensor(&bytes, &context)?;
        let (t, d) = (file.header.rows(), file.header.cols());
        if t == 0 {
            return Err(Error::EmptySequence {
                clip_id: item.clip_id.clone(),
            });
        }
        let replaced = sanitize(&mut file.data);
        if replaced > 0 {
            log::warn!("clip `{}`: replaced {replaced} non-finite values", item.clip_id);
            sanitized_values += replaced;
        }
        let valid_len = file.header.valid_len.unwrap_or(t);
        sequences.push(
            SequenceEmbedding::new(item.clip_id.clone(), file.data, t, d, valid_len)
                .map_err(|e| Error::format(&context, e.to_string()))?,
        );
    }
    Ok(LoadedSequences {
        sequences,
        sanitized_values,
        content_digest: hex::encode(hasher.finalize()),
    })
}
