//! Discrete speech units: mini-batch k-means codebooks, nearest-centroid
//! quantization and run-length dedup of unit sequences.

mod features;
mod io;
mod kmeans;

pub use features::{FeatureExtractor, FeatureSequence, FeatureSource};
pub use io::{
    decode_codebook, decode_features, encode_codebook, encode_features, load_codebook,
    load_features, load_unit_records, save_codebook, save_features, save_unit_records, UnitRecord,
};
pub use kmeans::{fit_minibatch_kmeans, kmeans_plus_plus, KMeansConfig};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::load_mono;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, Split};

/// `k` centroids over `dim`-dimensional features.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<f32>,
    counts: Vec<u64>,
    k: usize,
    dim: usize,
    seed: u64,
}

impl Codebook {
    pub fn new(centroids: Vec<f32>, counts: Vec<u64>, k: usize, dim: usize, seed: u64) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::InvalidInput("codebook needs k >= 1 and dim >= 1".into()));
        }
        if centroids.len() != k * dim || counts.len() != k {
            return Err(Error::Shape(format!(
                "codebook of {k} x {dim} got {} values and {} counts",
                centroids.len(),
                counts.len()
            )));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("codebook has non-finite centroids".into()));
        }
        Ok(Self {
            centroids,
            counts,
            k,
            dim,
            seed,
        })
    }

    /// Codebook with the given rows and zero counts.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("codebook rows differ in length".into()));
        }
        Self::new(rows.concat(), vec![0; rows.len()], rows.len(), dim, 0)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Index and squared distance of the nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, x: &[f32]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for c in 0..self.k {
            let d = sq_dist(x, self.centroid(c));
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }
}

pub(crate) fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Unit ids, optionally run-length compressed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitSequence {
    pub ids: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub run_lengths: Option<Vec<u32>>,
}

impl UnitSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        Self {
            ids,
            run_lengths: None,
        }
    }

    pub fn with_runs(ids: Vec<u32>, runs: Vec<u32>) -> Result<Self> {
        if ids.len() != runs.len() {
            return Err(Error::Shape(format!("{} ids vs {} run lengths", ids.len(), runs.len())));
        }
        if runs.iter().any(|&r| r == 0) {
            return Err(Error::InvalidInput("run lengths must be positive".into()));
        }
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("deduped ids contain a repeated neighbour".into()));
        }
        Ok(Self {
            ids,
            run_lengths: Some(runs),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Length of the sequence before dedup.
    pub fn expanded_len(&self) -> usize {
        match &self.run_lengths {
            Some(r) => r.iter().map(|&x| x as usize).sum(),
            None => self.ids.len(),
        }
    }
}

/// Assign each frame to its nearest centroid.
pub fn quantize(cb: &Codebook, feats: &FeatureSequence) -> Result<UnitSequence> {
    if feats.dim() != cb.dim() {
        return Err(Error::Shape(format!(
            "features have dim {}, codebook expects {}",
            feats.dim(),
            cb.dim()
        )));
    }
    let ids = (0..feats.n_frames())
        .map(|t| cb.nearest(feats.frame(t)).0 as u32)
        .collect();
    Ok(UnitSequence::new(ids))
}

/// Collapse maximal runs of equal ids, recording run lengths.
pub fn dedup_runs(u: &UnitSequence) -> UnitSequence {
    let full = expand_or_self(u);
    let mut ids = Vec::new();
    let mut runs: Vec<u32> = Vec::new();
    for &id in &full {
        if ids.last() == Some(&id) {
            *runs.last_mut().expect("parallel to ids") += 1;
        } else {
            ids.push(id);
            runs.push(1);
        }
    }
    UnitSequence {
        ids,
        run_lengths: Some(runs),
    }
}

fn expand_or_self(u: &UnitSequence) -> Vec<u32> {
    match &u.run_lengths {
        Some(runs) => u
            .ids
            .iter()
            .zip(runs)
            .flat_map(|(&id, &r)| std::iter::repeat_n(id, r as usize))
            .collect(),
        None => u.ids.clone(),
    }
}

/// Inverse of [`dedup_runs`].
pub fn expand_runs(u: &UnitSequence) -> Result<UnitSequence> {
    if u.run_lengths.is_none() {
        return Err(Error::InvalidInput("unit sequence has no run lengths to expand".into()));
    }
    Ok(UnitSequence::new(expand_or_self(u)))
}

/// Sum over frames of the squared distance to the nearest centroid.
pub fn inertia(cb: &Codebook, frames: &[f32], dim: usize) -> Result<f64> {
    if dim != cb.dim() || frames.len() % dim != 0 {
        return Err(Error::Shape(format!("frames of dim {dim} vs codebook dim {}", cb.dim())));
    }
    Ok(frames.chunks(dim).map(|x| cb.nearest(x).1).sum())
}

/// Features for the records of `split` (every record when `None`), in
/// manifest order: the record's feature file when it has one, otherwise
/// internal mel features of its audio.
pub fn manifest_features(
    manifest: &Manifest,
    split: Option<Split>,
    extractor: &FeatureExtractor,
    sample_rate: u32,
) -> Result<Vec<(String, FeatureSequence)>> {
    let recs: Vec<_> = manifest.records.iter().filter(|r| split.is_none_or(|s| r.split == s)).collect();
    recs.par_iter()
        .map(|r| {
            let f = match &r.features {
                Some(p) => load_features(manifest.resolve(p))?,
                None => extractor.extract(&load_mono(manifest.resolve(&r.audio), sample_rate)?)?,
            };
            Ok((r.id.clone(), f))
        })
        .collect()
}

/// Concatenate the frames of several sequences of equal dimension.
pub fn stack_frames(seqs: &[FeatureSequence]) -> Result<(Vec<f32>, usize)> {
    let dim = seqs.first().ok_or_else(|| Error::Data("no feature sequences".into()))?.dim();
    if seqs.iter().any(|f| f.dim() != dim) {
        return Err(Error::Data("feature sequences differ in dimension".into()));
    }
    Ok((seqs.iter().flat_map(|f| f.data().iter().copied()).collect(), dim))
}
