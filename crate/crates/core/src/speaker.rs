//! Speaker embeddings: the LKBE file format and embedding providers for mels.

use std::path::Path;

use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::tensorkit::checkpoint::Reader;

/// A fixed-dimensional speaker identity vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    values: Vec<f64>,
}

impl SpeakerEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("speaker embedding has non-finite values".into()));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidInput("speaker embedding has zero norm".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Element-wise mean of several embeddings of equal dimension.
    pub fn centroid(items: &[SpeakerEmbedding]) -> Result<Self> {
        let d = items
            .first()
            .ok_or_else(|| Error::InvalidInput("centroid of no embeddings".into()))?
            .dim();
        if items.iter().any(|e| e.dim() != d) {
            return Err(Error::Shape("embeddings differ in dimension".into()));
        }
        let mut acc = vec![0.0; d];
        for e in items {
            acc.iter_mut().zip(&e.values).for_each(|(a, v)| *a += v);
        }
        acc.iter_mut().for_each(|a| *a /= items.len() as f64);
        Self::new(acc)
    }
}

/// `"LKBE" | D u32 | D f32`.
pub fn encode_embedding(e: &SpeakerEmbedding) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * e.dim());
    out.extend_from_slice(b"LKBE");
    out.extend_from_slice(&(e.dim() as u32).to_le_bytes());
    for &v in e.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_embedding(bytes: &[u8]) -> Result<SpeakerEmbedding> {
    let mut r = Reader::new(bytes, "speaker embedding");
    r.magic(b"LKBE")?;
    let d = r.u32()? as usize;
    let v = r.f32s(d)?;
    r.finish()?;
    SpeakerEmbedding::new(v.into_iter().map(f64::from).collect())
}

pub fn save_embedding(path: impl AsRef<Path>, e: &SpeakerEmbedding) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_embedding(e)).map_err(|e| Error::io(path, e))
}

pub fn load_embedding(path: impl AsRef<Path>) -> Result<SpeakerEmbedding> {
    let path = path.as_ref();
    decode_embedding(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Anything that can map a mel spectrogram to a speaker embedding.
pub trait EmbeddingProvider: Sync {
    fn embed(&self, mel: &MelSpectrogram) -> Result<SpeakerEmbedding>;
}

/// Built-in provider: statistics pooling over log-mel frames.
///
/// The per-bin mean has its least-squares line across bins removed, so
/// overall gain and a straight spectral tilt do not move the embedding. The
/// per-bin std is appended. An optional reference centre is subtracted so
/// cosine similarity compares deviations from a typical voice.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MelStatsEmbedder {
    pub center: Option<Vec<f64>>,
}

impl MelStatsEmbedder {
    pub fn raw_stats(mel: &MelSpectrogram) -> Result<Vec<f64>> {
        let (t, d) = (mel.n_frames(), mel.n_mels());
        if t < 2 || d < 2 {
            return Err(Error::InvalidInput("need at least 2 frames and 2 bins to embed".into()));
        }
        let mut mean = vec![0.0; d];
        for i in 0..t {
            mean.iter_mut().zip(mel.frame(i)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= t as f64);
        let mut std = vec![0.0; d];
        for i in 0..t {
            for (j, v) in mel.frame(i).iter().enumerate() {
                std[j] += (v - mean[j]).powi(2);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / t as f64).sqrt());
        let xm = (d - 1) as f64 / 2.0;
        let ym = mean.iter().sum::<f64>() / d as f64;
        let sxx: f64 = (0..d).map(|j| (j as f64 - xm).powi(2)).sum();
        let sxy: f64 = (0..d).map(|j| (j as f64 - xm) * (mean[j] - ym)).sum();
        let slope = sxy / sxx;
        let mut out: Vec<f64> = (0..d).map(|j| mean[j] - ym - slope * (j as f64 - xm)).collect();
        out.extend(std);
        Ok(out)
    }

    /// Use the average raw statistics of `mels` as the centre.
    pub fn fit(mels: &[MelSpectrogram]) -> Result<Self> {
        let stats = mels.iter().map(Self::raw_stats).collect::<Result<Vec<_>>>()?;
        let first = stats
            .first()
            .ok_or_else(|| Error::InvalidInput("no mels to fit the embedder centre".into()))?;
        let mut c = vec![0.0; first.len()];
        for s in &stats {
            if s.len() != c.len() {
                return Err(Error::Shape("mels differ in bin count".into()));
            }
            c.iter_mut().zip(s).for_each(|(a, v)| *a += v);
        }
        c.iter_mut().for_each(|a| *a /= stats.len() as f64);
        Ok(Self { center: Some(c) })
    }
}

impl EmbeddingProvider for MelStatsEmbedder {
    fn embed(&self, mel: &MelSpectrogram) -> Result<SpeakerEmbedding> {
        let mut v = Self::raw_stats(mel)?;
        if let Some(c) = &self.center {
            if c.len() != v.len() {
                return Err(Error::Shape(format!("embedder centre has {} dims, stats have {}", c.len(), v.len())));
            }
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= b);
        }
        SpeakerEmbedding::new(v)
    }
}
