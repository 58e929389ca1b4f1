//! JSON Lines corpus manifests. Relative paths resolve against the manifest's directory.

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(alias = "validation")]
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub audio: PathBuf,
    pub split: Split,
    pub ratings: Option<[f64; 4]>,
    pub speaker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings_pred: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings_orig: Option<[f64; 4]>,
}

impl ManifestRecord {
    pub fn new(id: impl Into<String>, audio: impl Into<PathBuf>, split: Split, speaker: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            audio: audio.into(),
            split,
            ratings: None,
            speaker: speaker.into(),
            text: None,
            features: None,
            embedding: None,
            ratings_pred: None,
            ratings_orig: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            records,
            base_dir: base_dir.into(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let reader = ManifestReader::open(path)?;
        let base_dir = reader.base_dir().to_path_buf();
        let records = reader.collect::<Result<Vec<_>>>()?;
        Ok(Self { records, base_dir })
    }

    /// Write as JSON Lines. Paths are written as stored.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}

/// Record-at-a-time reader over a manifest file.
pub struct ManifestReader {
    path: PathBuf,
    base_dir: PathBuf,
    lines: std::iter::Enumerate<std::io::Lines<std::io::BufReader<std::fs::File>>>,
}

impl ManifestReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            lines: std::io::BufReader::new(file).lines().enumerate(),
        })
    }

    /// Directory that relative paths in the records resolve against.
    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    fn parse(&self, n: usize, line: &str) -> Result<ManifestRecord> {
        let rec: ManifestRecord = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", self.path.display(), n + 1)))?;
        if rec.ratings.is_some_and(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Data(format!("{}:{}: non-finite rating", self.path.display(), n + 1)));
        }
        Ok(rec)
    }
}

impl Iterator for ManifestReader {
    type Item = Result<ManifestRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (n, line) = self.lines.next()?;
            match line {
                Err(e) => return Some(Err(Error::io(&self.path, e))),
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => return Some(self.parse(n, &l)),
            }
        }
    }
}

/// Rewrite the relative paths of `r` (audio, features, embedding) so they
/// resolve the same way from `to` as they did from `from`. Paths that leave
/// `to` become absolute.
pub fn rebase_record(r: &mut ManifestRecord, from: &Path, to: &Path) {
    let from = std::path::absolute(from).unwrap_or_else(|_| from.to_path_buf());
    let to = std::path::absolute(to).unwrap_or_else(|_| to.to_path_buf());
    if from == to {
        return;
    }
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            let full = from.join(&*p);
            *p = match full.strip_prefix(&to) {
                Ok(rel) => rel.to_path_buf(),
                Err(_) => full,
            };
        }
    };
    fix(&mut r.audio);
    if let Some(p) = r.features.as_mut() {
        fix(p);
    }
    if let Some(p) = r.embedding.as_mut() {
        fix(p);
    }
}
