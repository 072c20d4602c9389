//! JSON-lines dataset manifests.
//!
//! One object per line: `{"path": "clips/a.wav", "label": "wood"}`. Relative
//! paths resolve against the manifest's directory. Blank lines are ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub class_name: String,
    pub entries: Vec<ManifestEntry>,
    vocabulary: Vec<String>,
}

impl DatasetManifest {
    pub fn new(class_name: impl Into<String>, entries: Vec<ManifestEntry>) -> Self {
        let mut vocabulary: Vec<String> = Vec::new();
        for e in &entries {
            if !vocabulary.contains(&e.label) {
                vocabulary.push(e.label.clone());
            }
        }
        Self {
            class_name: class_name.into(),
            entries,
            vocabulary,
        }
    }

    /// Labels in first-appearance order; the position is the dense label id.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.vocabulary.iter().position(|l| l == label)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes the manifest as JSON lines with paths as given.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawEntry {
    path: Option<String>,
    label: Option<String>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let err = |line: usize, message: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(0, e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let class_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEntry = serde_json::from_str(line).map_err(|e| err(line_no, e.to_string()))?;
        let file = raw.path.ok_or_else(|| err(line_no, "missing key \"path\"".into()))?;
        let label = raw.label.ok_or_else(|| err(line_no, "missing key \"label\"".into()))?;
        let resolved = base.join(&file);
        if !resolved.exists() {
            return Err(err(line_no, format!("file not found: {}", resolved.display())));
        }
        entries.push(ManifestEntry {
            path: resolved,
            label,
        });
    }
    Ok(DatasetManifest::new(class_name, entries))
}
