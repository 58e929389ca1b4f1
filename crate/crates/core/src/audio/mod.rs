//! Audio ingestion and the log-Mel front end shared by the predictor and the converter.

mod mel;
mod resample;
pub(crate) mod stft;
mod wav;

pub use mel::{log_mel_spectrogram, mel_filterbank, MelConfig, MelSpectrogram};
pub use resample::resample;
pub use wav::{load_wav, read_wav, write_wav_pcm16};

use crate::error::{Error, Result};

/// Sample rate every pipeline stage works at unless configured otherwise.
pub const DEFAULT_SAMPLE_RATE: u32 = 22050;

/// A sampled audio signal, one sample vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    channels: Vec<Vec<f32>>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(channels: Vec<Vec<f32>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidInput("waveform needs at least one channel".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidInput("channels differ in length".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, idx: usize) -> &[f32] {
        &self.channels[idx]
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    /// First channel; for mono signals this is the whole signal.
    pub fn samples(&self) -> &[f32] {
        &self.channels[0]
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.channels.into_iter().next().unwrap_or_default()
    }

    pub fn is_mono(&self) -> bool {
        self.channels.len() == 1
    }

    pub(crate) fn require_mono(&self, what: &str) -> Result<()> {
        if self.is_mono() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{what} expects a mono waveform, got {} channels",
                self.channels.len()
            )))
        }
    }

    /// Peak absolute sample value across channels.
    pub fn peak(&self) -> f32 {
        self.channels
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f32, |m, &x| m.max(x.abs()))
    }

    /// Mean square of the first channel.
    pub fn power(&self) -> f64 {
        let s = self.samples();
        if s.is_empty() {
            return 0.0;
        }
        s.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>() / s.len() as f64
    }
}

/// Average all channels into one.
pub fn to_mono(w: &Waveform) -> Waveform {
    if w.is_mono() {
        return w.clone();
    }
    let n = w.num_channels() as f64;
    let samples = (0..w.len())
        .map(|t| (w.channels.iter().map(|c| c[t] as f64).sum::<f64>() / n) as f32)
        .collect();
    Waveform {
        channels: vec![samples],
        sample_rate: w.sample_rate,
    }
}

/// Load a WAV file and bring it to a mono signal at `target_rate`.
pub fn load_mono(path: impl AsRef<std::path::Path>, target_rate: u32) -> Result<Waveform> {
    let w = to_mono(&load_wav(path)?);
    resample(&w, target_rate)
}
