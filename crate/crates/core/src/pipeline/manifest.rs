//! Dataset manifests: tab-separated `path`, `label`, `sequence` rows.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::UNKNOWN;

pub const MANIFEST_HEADER: &str = "path\tlabel\tsequence";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub path: PathBuf,
    pub label: String,
    pub sequence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    entries: Vec<Entry>,
}

impl Manifest {
    pub fn new(entries: Vec<Entry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.label.is_empty() || e.label == UNKNOWN {
                return Err(Error::InvalidLabel(e.label.clone()));
            }
            if e.label.contains(['\t', '\n', ',']) || e.sequence.contains(['\t', '\n']) {
                return Err(Error::InvalidLabel(format!("{:?} contains a separator", e.label)));
            }
            if !seen.insert(&e.path) {
                return Err(Error::Format(format!("duplicate manifest path {}", e.path.display())));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted class labels.
    pub fn classes(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.entries.iter().map(|e| e.label.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Rows whose sequence is in `sequences`, in manifest order.
    pub fn select_sequences<S: AsRef<str>>(&self, sequences: &[S]) -> Manifest {
        Manifest {
            entries: self
                .entries
                .iter()
                .filter(|e| sequences.iter().any(|s| s.as_ref() == e.sequence))
                .cloned()
                .collect(),
        }
    }

    /// Parses manifest text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r') == MANIFEST_HEADER => {}
            _ => return Err(Error::Format(format!("manifest must start with {MANIFEST_HEADER:?}"))),
        }
        let entries = lines
            .map(|(n, line)| {
                let cols: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
                let [path, label, sequence] = cols[..] else {
                    return Err(Error::Format(format!("manifest line {}: expected 3 columns", n + 1)));
                };
                let path = Path::new(path);
                Ok(Entry {
                    path: if path.is_absolute() { path.to_path_buf() } else { base.join(path) },
                    label: label.to_string(),
                    sequence: sequence.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    /// Loads a manifest file; relative image paths are taken from the
    /// manifest's own directory and made absolute, so artifact names do not
    /// depend on the working directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(dir).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &base)
    }

    /// Paths under `base` are written relative to it.
    pub fn to_tsv(&self, base: &Path) -> String {
        let mut out = format!("{MANIFEST_HEADER}\n");
        for e in &self.entries {
            let p = e.path.strip_prefix(base).unwrap_or(&e.path);
            let _ = writeln!(out, "{}\t{}\t{}", p.display(), e.label, e.sequence);
        }
        out
    }
}
