use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Covid19,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Covid19 => "covid19",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "normal" => Ok(Label::Normal),
            "covid19" => Ok(Label::Covid19),
            other => Err(format!("unknown label {other:?} (expected normal or covid19)")),
        }
    }
}

/// Fixed class order `[normal, covid19]`; covid19 (index 1) is the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassOrder {
    pub labels: [Label; 2],
}

impl Default for ClassOrder {
    fn default() -> Self {
        Self { labels: [Label::Normal, Label::Covid19] }
    }
}

impl ClassOrder {
    pub const POSITIVE: usize = 1;

    pub fn index(&self, label: Label) -> usize {
        self.labels.iter().position(|&l| l == label).expect("both labels are ordered")
    }

    pub fn label(&self, index: usize) -> Result<Label> {
        self.labels
            .get(index)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("class index {index} out of range")))
    }

    pub fn one_hot<T: Scalar>(&self, label: Label) -> Tensor<T> {
        let i = self.index(label);
        Tensor::from_fn(vec![2], |k| if k == i { T::one() } else { T::zero() }).expect("static shape")
    }

    /// One-hot encoding of a textual label.
    pub fn encode<T: Scalar>(&self, label: &str) -> Result<Tensor<T>> {
        let l = label.parse::<Label>().map_err(Error::InvalidArgument)?;
        Ok(self.one_hot(l))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path as written in the manifest.
    pub image_path: String,
    pub label: Label,
}

impl ManifestEntry {
    /// Relative paths are resolved against the manifest's directory.
    pub fn resolve(&self, manifest_dir: &Path) -> PathBuf {
        let p = Path::new(&self.image_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_dir.join(p)
        }
    }
}

/// Reads a `image_path,label` CSV. Rows are numbered from 1 after the header.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |row: usize, detail: String| Error::Manifest { path: path.to_path_buf(), row, detail };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| err(0, e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "image_path" || &headers[1] != "label" {
        return Err(err(0, format!("header must be image_path,label, got {:?}", headers.iter().collect::<Vec<_>>())));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| err(row, e.to_string()))?;
        if rec.len() != 2 {
            return Err(err(row, format!("expected 2 fields, got {}", rec.len())));
        }
        let image_path = rec[0].trim().to_string();
        if image_path.is_empty() {
            return Err(err(row, "empty image_path".into()));
        }
        let label = rec[1].parse::<Label>().map_err(|e| err(row, e))?;
        if !seen.insert(image_path.clone()) {
            return Err(err(row, format!("duplicate image_path {image_path:?}")));
        }
        entries.push(ManifestEntry { image_path, label });
    }
    Ok(entries)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("image_path,label\n");
    for e in entries {
        out.push_str(&format!("{},{}\n", e.image_path, e.label));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
