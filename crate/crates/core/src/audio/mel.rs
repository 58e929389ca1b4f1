use serde::{Deserialize, Serialize};

use super::stft::Stft;
use super::Waveform;
use crate::error::{Error, Result};

/// Log-Mel front-end parameters.
///
/// Window, FFT size, mel scale and log base are not fixed by any upstream
/// recipe; the defaults here (Hann, 1024-point, HTK scale, natural log with a
/// 1e-10 floor) are conventional and fully configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub hop: usize,
    pub win: usize,
    pub fft_size: usize,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            f_min: 0.0,
            f_max: 8000.0,
            hop: 256,
            win: 1024,
            fft_size: 1024,
            log_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(Error::Config(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got f_min={} f_max={}",
                self.f_min, self.f_max
            )));
        }
        if !(self.hop > 0 && self.hop <= self.win && self.win <= self.fft_size) {
            return Err(Error::Config(format!(
                "need 0 < hop <= win <= fft_size, got {} / {} / {}",
                self.hop, self.win, self.fft_size
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        Ok(())
    }

    /// Number of frames produced from `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.win {
            0
        } else {
            1 + (len - self.win) / self.hop
        }
    }

    pub fn floor_value(&self) -> f64 {
        self.log_floor.ln()
    }

    /// Checkpoint row: sample rate followed by the settings that survive f32.
    /// The log floor is left out.
    pub(crate) fn to_row(&self, sample_rate: u32) -> Vec<f64> {
        vec![
            sample_rate as f64,
            self.n_mels as f64,
            self.f_min,
            self.f_max,
            self.hop as f64,
            self.win as f64,
            self.fft_size as f64,
        ]
    }

    pub(crate) fn from_row(row: &[f64]) -> Result<(u32, Self)> {
        if row.len() != 7 {
            return Err(Error::format("checkpoint", "mel config row must have 7 values"));
        }
        let sr = row[0] as u32;
        let cfg = Self {
            n_mels: row[1] as usize,
            f_min: row[2],
            f_max: row[3],
            hop: row[4] as usize,
            win: row[5] as usize,
            fft_size: row[6] as usize,
            log_floor: Self::default().log_floor,
        };
        cfg.validate(sr)?;
        Ok((sr, cfg))
    }
}

/// A T x n_mels matrix of natural-log Mel energies, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f64>,
    n_frames: usize,
    config: MelConfig,
}

impl MelSpectrogram {
    pub fn from_frames(data: Vec<f64>, n_frames: usize, config: MelConfig) -> Result<Self> {
        if n_frames == 0 || data.len() != n_frames * config.n_mels {
            return Err(Error::Shape(format!(
                "mel data of length {} does not hold {n_frames} frames of {} bins",
                data.len(),
                config.n_mels
            )));
        }
        Ok(Self {
            data,
            n_frames,
            config,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_mels(&self) -> usize {
        self.config.n_mels
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let m = self.config.n_mels;
        &self.data[t * m..(t + 1) * m]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Unit-peak triangular filters on the HTK mel scale, `n_mels x (fft_size/2 + 1)`.
pub fn mel_filterbank(cfg: &MelConfig, sample_rate: u32) -> Vec<Vec<f64>> {
    let n_bins = cfg.fft_size / 2 + 1;
    let lo = hz_to_mel(cfg.f_min);
    let hi = hz_to_mel(cfg.f_max);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / cfg.fft_size as f64;
    (0..cfg.n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Hann-windowed power spectrum, mel filterbank, natural log with a floor.
pub fn log_mel_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    w.require_mono("log_mel_spectrogram")?;
    cfg.validate(w.sample_rate())?;
    if w.len() < cfg.win {
        return Err(Error::InvalidInput(format!(
            "signal of {} samples is shorter than one {}-sample window",
            w.len(),
            cfg.win
        )));
    }
    let stft = Stft::new(cfg.win, cfg.hop, cfg.fft_size);
    let fb = mel_filterbank(cfg, w.sample_rate());
    let power = stft.power(w.samples());
    let mut data = Vec::with_capacity(power.len() * cfg.n_mels);
    for frame in &power {
        for filt in &fb {
            let e: f64 = filt.iter().zip(frame).map(|(a, b)| a * b).sum();
            data.push(e.max(cfg.log_floor).ln());
        }
    }
    MelSpectrogram::from_frames(data, power.len(), cfg.clone())
}
