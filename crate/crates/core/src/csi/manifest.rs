use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::InteractionLabel;
use crate::error::{Error, Result};

/// One recording in a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: InteractionLabel,
    pub pair_id: u32,
    pub trial_id: u32,
}

/// Dataset index: UTF-8 lines `path,label_id,pair_id,trial_id`.
///
/// Relative paths are interpreted against the manifest's own directory.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !seen.insert(e.path.clone()) {
                return Err(Error::Manifest { line: i + 1, msg: format!("duplicate path {}", e.path.display()) });
            }
        }
        Ok(DatasetManifest { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Manifest { line: i + 1, msg };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(bad(format!("expected 4 comma-separated fields, found {}", fields.len())));
            }
            let num = |s: &str, what: &str| -> Result<u32> {
                s.trim().parse::<u32>().map_err(|_| bad(format!("{what} `{s}` is not a non-negative integer")))
            };
            let label = InteractionLabel::new(num(fields[1], "label_id")? as usize).map_err(|e| bad(e.to_string()))?;
            entries.push(ManifestEntry {
                path: PathBuf::from(fields[0].trim()),
                label,
                pair_id: num(fields[2], "pair_id")?,
                trial_id: num(fields[3], "trial_id")?,
            });
        }
        Self::new(entries)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            writeln!(out, "{},{},{},{}", e.path.display(), e.label.id(), e.pair_id, e.trial_id).unwrap();
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    /// Entry path resolved against `base` (normally the manifest directory).
    pub fn resolve(base: &Path, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        }
    }
}
