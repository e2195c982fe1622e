use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Class code given to rows without a valid label.
pub const INVALID_CLASS: u32 = u32::MAX;

/// Per-row class labels with a derived class index.
///
/// Empty labels are treated as missing; such rows carry [`INVALID_CLASS`]
/// and are absent from the class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    codes: Vec<u32>,
    class_names: Vec<String>,
    class_index: BTreeMap<String, Vec<usize>>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut class_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, label) in labels.iter().enumerate() {
            if !label.trim().is_empty() {
                class_index.entry(label.clone()).or_default().push(i);
            }
        }
        let class_names: Vec<String> = class_index.keys().cloned().collect();
        let lookup: HashMap<&str, u32> = class_names
            .iter()
            .enumerate()
            .map(|(c, name)| (name.as_str(), c as u32))
            .collect();
        let codes = labels
            .iter()
            .map(|l| lookup.get(l.as_str()).copied().unwrap_or(INVALID_CLASS))
            .collect();
        Self {
            labels,
            codes,
            class_names,
            class_index,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Dense class codes in `0..num_classes`, or [`INVALID_CLASS`].
    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.class_index
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.codes[i] != INVALID_CLASS
    }

    pub fn num_valid(&self) -> usize {
        self.codes.iter().filter(|&&c| c != INVALID_CLASS).count()
    }

    /// Rebuilds from class codes (e.g. after shuffling or flipping).
    pub fn from_codes(codes: &[u32], class_names: &[String]) -> Self {
        Self::new(codes.iter().map(|&c| {
            if c == INVALID_CLASS {
                String::new()
            } else {
                class_names[c as usize].clone()
            }
        }))
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        Self::new(order.iter().map(|&i| self.labels[i].clone()))
    }
}

/// Maps clip identifiers to row indices.
#[derive(Debug, Clone, Default)]
pub struct IdIndex {
    map: HashMap<String, usize>,
}

impl IdIndex {
    pub fn new<S: AsRef<str>>(ids: &[S]) -> Self {
        Self {
            map: ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_ref().to_string(), i))
                .collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.map.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    clip_id: String,
    #[serde(default)]
    label: String,
}

/// Reads a `clip_id,label` CSV; extra columns (e.g. a full manifest) are ignored.
pub fn read_labels_csv(path: &Path) -> Result<(Vec<String>, LabelSet)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
        ),
        _ => Error::Csv(e),
    })?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row?;
        ids.push(row.clip_id);
        labels.push(row.label);
    }
    Ok((ids, LabelSet::new(labels)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_index_partitions_valid_rows() {
        let set = LabelSet::new(["b", "a", "", "b", "c"]);
        assert_eq!(set.num_classes(), 3);
        assert_eq!(set.class_index()["b"], vec![0, 3]);
        assert_eq!(set.codes(), &[1, 0, INVALID_CLASS, 1, 2]);
        assert_eq!(set.num_valid(), 4);
        let total: usize = set.class_index().values().map(Vec::len).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn from_codes_roundtrips() {
        let set = LabelSet::new(["x", "y", "x", ""]);
        let back = LabelSet::from_codes(set.codes(), set.class_names());
        assert_eq!(back, set);
    }
}
