use serde::{Deserialize, Serialize};

use crate::audio::{log_mel_spectrogram, MelConfig, MelSpectrogram, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    ExternalFile,
    InternalMel,
}

/// Row-major `T x D` frame matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f32>,
    dim: usize,
    source: FeatureSource,
}

impl FeatureSequence {
    pub fn new(data: Vec<f32>, dim: usize) -> Result<Self> {
        Self::with_source(data, dim, FeatureSource::ExternalFile)
    }

    pub fn with_source(data: Vec<f32>, dim: usize, source: FeatureSource) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Shape(format!("{} values do not form rows of {dim}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature sequence has non-finite values".into()));
        }
        Ok(Self { data, dim, source })
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Built-in feature provider used when no external features are supplied.
///
/// Frames are log-mel vectors with the per-utterance mean removed, which
/// discards most of the stationary speaker and channel colouring.
#[derive(Debug, Clone, Default)]
pub struct FeatureExtractor {
    pub mel: MelConfig,
}

impl FeatureExtractor {
    pub fn new(mel: MelConfig) -> Self {
        Self { mel }
    }

    pub fn extract(&self, w: &Waveform) -> Result<FeatureSequence> {
        Self::from_mel(&log_mel_spectrogram(w, &self.mel)?)
    }

    /// The same features computed from an existing log-mel spectrogram.
    pub fn from_mel(m: &MelSpectrogram) -> Result<FeatureSequence> {
        if m.n_frames() == 0 {
            return Err(Error::InvalidInput("no frames to extract features from".into()));
        }
        let (t, d) = (m.n_frames(), m.n_mels());
        let mut mean = vec![0.0f64; d];
        for i in 0..t {
            for (a, v) in mean.iter_mut().zip(m.frame(i)) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= t as f64);
        let data = (0..t)
            .flat_map(|i| m.frame(i).iter().zip(&mean).map(|(v, mu)| (v - mu) as f32).collect::<Vec<_>>())
            .collect();
        FeatureSequence::with_source(data, d, FeatureSource::InternalMel)
    }
}
