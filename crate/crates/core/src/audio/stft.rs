use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Short-time Fourier transform without centre padding: frame `t` covers
/// samples `[t * hop, t * hop + win)`.
pub struct Stft {
    win: usize,
    hop: usize,
    fft_size: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(win: usize, hop: usize, fft_size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            win,
            hop,
            fft_size,
            window: hann(win),
            forward: planner.plan_fft_forward(fft_size),
            inverse: planner.plan_fft_inverse(fft_size),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.win {
            0
        } else {
            1 + (len - self.win) / self.hop
        }
    }

    /// Length of a signal synthesised from `n_frames` frames.
    pub fn signal_len(&self, n_frames: usize) -> usize {
        if n_frames == 0 {
            0
        } else {
            (n_frames - 1) * self.hop + self.win
        }
    }

    /// Half spectrum (DC..Nyquist) of every frame.
    pub fn analyze<T: Copy + Into<f64>>(&self, x: &[T]) -> Vec<Vec<Complex64>> {
        let n_bins = self.n_bins();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_size];
        (0..self.n_frames(x.len()))
            .map(|t| {
                let start = t * self.hop;
                buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                for i in 0..self.win {
                    buf[i].re = x[start + i].into() * self.window[i];
                }
                self.forward.process(&mut buf);
                buf[..n_bins].to_vec()
            })
            .collect()
    }

    /// Magnitude-squared spectrum of every frame.
    pub fn power<T: Copy + Into<f64>>(&self, x: &[T]) -> Vec<Vec<f64>> {
        self.analyze(x)
            .into_iter()
            .map(|f| f.iter().map(|c| c.norm_sqr()).collect())
            .collect()
    }

    /// Weighted overlap-add inverse of [`Stft::analyze`].
    pub fn synthesize(&self, frames: &[Vec<Complex64>]) -> Vec<f64> {
        let len = self.signal_len(frames.len());
        let mut out = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_size];
        let n_bins = self.n_bins();
        for (t, frame) in frames.iter().enumerate() {
            buf[..n_bins].copy_from_slice(&frame[..n_bins]);
            for k in n_bins..self.fft_size {
                buf[k] = frame[self.fft_size - k].conj();
            }
            self.inverse.process(&mut buf);
            let start = t * self.hop;
            for i in 0..self.win {
                let w = self.window[i];
                out[start + i] += buf[i].re / self.fft_size as f64 * w;
                norm[start + i] += w * w;
            }
        }
        for (o, n) in out.iter_mut().zip(&norm) {
            if *n > 1e-8 {
                *o /= n;
            }
        }
        out
    }
}
