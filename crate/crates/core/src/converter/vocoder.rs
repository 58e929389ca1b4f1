use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::audio::stft::Stft;
use crate::audio::{mel_filterbank, MelSpectrogram, Waveform};
use crate::error::{Error, Result};

pub const DEFAULT_GL_ITERATIONS: usize = 60;

/// Linear magnitude spectrogram estimated from a log-mel spectrogram through
/// the pseudo-inverse of the filterbank. Negative power estimates are zeroed.
pub fn mel_to_magnitude(mel: &MelSpectrogram, sample_rate: u32) -> Result<Vec<Vec<f64>>> {
    let cfg = mel.config();
    cfg.validate(sample_rate)?;
    if mel.n_mels() != cfg.n_mels {
        return Err(Error::Shape(format!("mel has {} bins, its config says {}", mel.n_mels(), cfg.n_mels)));
    }
    let fb = mel_filterbank(cfg, sample_rate);
    let n_bins = cfg.fft_size / 2 + 1;
    let fb = DMatrix::from_fn(cfg.n_mels, n_bins, |m, k| fb[m][k]);
    let pinv = fb
        .pseudo_inverse(1e-10)
        .map_err(|e| Error::InvalidInput(format!("filterbank pseudo-inverse failed: {e}")))?;
    let t = mel.n_frames();
    let power = DMatrix::from_fn(cfg.n_mels, t, |m, i| mel.frame(i)[m].exp());
    let lin = pinv * power;
    Ok((0..t)
        .map(|i| (0..n_bins).map(|k| lin[(k, i)].max(0.0).sqrt()).collect())
        .collect())
}

/// Griffin-Lim phase reconstruction from a log-mel spectrogram.
///
/// The initial phase comes from a fixed-seed generator, so the output is a
/// pure function of the inputs.
pub fn griffin_lim_vocoder(mel: &MelSpectrogram, sample_rate: u32, iterations: usize) -> Result<Waveform> {
    if mel.n_frames() == 0 {
        return Err(Error::InvalidInput("empty mel spectrogram".into()));
    }
    let cfg = mel.config();
    let mag = mel_to_magnitude(mel, sample_rate)?;
    let stft = Stft::new(cfg.win, cfg.hop, cfg.fft_size);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut spec: Vec<Vec<Complex64>> = mag
        .iter()
        .map(|f| {
            f.iter()
                .map(|&a| Complex64::from_polar(a, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)))
                .collect()
        })
        .collect();
    let mut signal = stft.synthesize(&spec);
    for _ in 0..iterations {
        let est = stft.analyze(&signal);
        for ((frame, e), m) in spec.iter_mut().zip(&est).zip(&mag) {
            for ((c, z), &a) in frame.iter_mut().zip(e).zip(m) {
                let n = z.norm();
                *c = if n > 0.0 { z * (a / n) } else { Complex64::new(a, 0.0) };
            }
        }
        signal = stft.synthesize(&spec);
    }
    let samples = signal.iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect();
    Waveform::mono(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{log_mel_spectrogram, MelConfig};

    fn peak_bin(x: &[f32], fft: usize) -> usize {
        let stft = Stft::new(fft, fft, fft);
        let mut acc = vec![0.0; fft / 2 + 1];
        for f in stft.power(x) {
            acc.iter_mut().zip(&f).for_each(|(a, p)| *a += p);
        }
        (0..acc.len()).max_by(|&a, &b| acc[a].total_cmp(&acc[b])).unwrap()
    }

    #[test]
    fn sine_frequency_survives() {
        let sr = 22050;
        let f0 = 1000.0;
        let x: Vec<f32> = (0..sr as usize / 2)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * f0 * i as f64 / sr as f64).sin()) as f32)
            .collect();
        let w = Waveform::mono(x, sr).unwrap();
        let mel = log_mel_spectrogram(&w, &MelConfig::default()).unwrap();
        let y = griffin_lim_vocoder(&mel, sr, DEFAULT_GL_ITERATIONS).unwrap();
        let (a, b) = (peak_bin(w.samples(), 1024), peak_bin(y.samples(), 1024));
        assert!(a.abs_diff(b) <= 1, "source bin {a}, reconstruction bin {b}");
    }

    #[test]
    fn floor_mel_is_near_silent() {
        let cfg = MelConfig::default();
        let mel = MelSpectrogram::from_frames(vec![cfg.floor_value(); 20 * 80], 20, cfg).unwrap();
        let y = griffin_lim_vocoder(&mel, 22050, 10).unwrap();
        assert!(y.peak() < 0.01);
        assert_eq!(y.len(), 19 * 256 + 1024);
    }

    #[test]
    fn deterministic() {
        let cfg = MelConfig::default();
        let data = (0..12 * 80).map(|i| ((i % 17) as f64 * 0.3).sin() - 4.0).collect();
        let mel = MelSpectrogram::from_frames(data, 12, cfg).unwrap();
        let a = griffin_lim_vocoder(&mel, 22050, 5).unwrap();
        let b = griffin_lim_vocoder(&mel, 22050, 5).unwrap();
        assert_eq!(a, b);
    }
}
