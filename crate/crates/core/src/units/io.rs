//! Binary layouts (little-endian):
//!
//! ```text
//! features: "LKBF" | T u32 | D u32 | T*D f32
//! codebook: "LKBC" | k u32 | D u32 | k*D f32 | k u64 counts
//! ```
//!
//! Unit files are JSON Lines of `{"id", "units", "runs"}`.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Codebook, FeatureSequence, UnitSequence};
use crate::error::{Error, Result};
use crate::tensorkit::checkpoint::Reader;

pub fn encode_features(f: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + f.data().len() * 4);
    out.extend_from_slice(b"LKBF");
    out.extend_from_slice(&(f.n_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(f.dim() as u32).to_le_bytes());
    for v in f.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSequence> {
    let mut r = Reader::new(bytes, "feature file");
    r.magic(b"LKBF")?;
    let t = r.u32()? as usize;
    let d = r.u32()? as usize;
    if d == 0 {
        return Err(Error::format("feature file", "zero feature dimension"));
    }
    let n = t
        .checked_mul(d)
        .ok_or_else(|| Error::format("feature file", "size overflow"))?;
    let data = r.f32s(n)?;
    r.finish()?;
    FeatureSequence::new(data, d)
}

pub fn encode_codebook(cb: &Codebook) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"LKBC");
    out.extend_from_slice(&(cb.k() as u32).to_le_bytes());
    out.extend_from_slice(&(cb.dim() as u32).to_le_bytes());
    for v in cb.centroids() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for c in cb.counts() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

pub fn decode_codebook(bytes: &[u8]) -> Result<Codebook> {
    let mut r = Reader::new(bytes, "codebook");
    r.magic(b"LKBC")?;
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    let n = k
        .checked_mul(d)
        .ok_or_else(|| Error::format("codebook", "size overflow"))?;
    let centroids = r.f32s(n)?;
    let counts = (0..k).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Codebook::new(centroids, counts, k, d, 0)
}

pub fn save_features(path: impl AsRef<Path>, f: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_features(f)).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    decode_features(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_codebook(path: impl AsRef<Path>, cb: &Codebook) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_codebook(cb)).map_err(|e| Error::io(path, e))
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    let path = path.as_ref();
    decode_codebook(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// One line of a unit file: deduplicated ids and their run lengths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitRecord {
    pub id: String,
    pub units: Vec<u32>,
    pub runs: Vec<u32>,
}

impl UnitRecord {
    /// Dedup `units` if it has no run lengths yet.
    pub fn new(id: impl Into<String>, units: &UnitSequence) -> Self {
        let d = match units.run_lengths {
            Some(_) => units.clone(),
            None => super::dedup_runs(units),
        };
        Self {
            id: id.into(),
            units: d.ids,
            runs: d.run_lengths.unwrap_or_default(),
        }
    }

    pub fn sequence(&self) -> Result<UnitSequence> {
        UnitSequence::with_runs(self.units.clone(), self.runs.clone())
    }
}

pub fn save_unit_records(path: impl AsRef<Path>, records: &[UnitRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_unit_records(path: impl AsRef<Path>) -> Result<Vec<UnitRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: UnitRecord =
            serde_json::from_str(&line).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        r.sequence()
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(r);
    }
    Ok(out)
}
