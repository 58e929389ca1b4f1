//! Waveform-domain augmentation for predictor training: silence padding,
//! reverberation, white noise and time reversal.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, resample, to_mono, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub max_pad_sec: f64,
    pub snr_db_range: [f64; 2],
    pub pad_prob: f64,
    pub reverb_prob: f64,
    pub noise_prob: f64,
    pub reverse_prob: f64,
    /// Directory of impulse-response WAVs. Reverberation is skipped when unset or empty.
    pub ir_dir: Option<PathBuf>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_pad_sec: 0.5,
            snr_db_range: [10.0, 40.0],
            pad_prob: 0.5,
            reverb_prob: 0.5,
            noise_prob: 0.5,
            reverse_prob: 0.5,
            ir_dir: None,
        }
    }
}

impl AugmentConfig {
    /// Configuration under which [`augment_chain`] is the identity.
    pub fn disabled() -> Self {
        Self {
            pad_prob: 0.0,
            reverb_prob: 0.0,
            noise_prob: 0.0,
            reverse_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("pad_prob", self.pad_prob),
            ("reverb_prob", self.reverb_prob),
            ("noise_prob", self.noise_prob),
            ("reverse_prob", self.reverse_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if !(self.snr_db_range[0] <= self.snr_db_range[1]) {
            return Err(Error::Config("snr_db_range must be [min, max] with min <= max".into()));
        }
        if !(self.max_pad_sec >= 0.0) {
            return Err(Error::Config("max_pad_sec must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl ImpulseResponse {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("impulse response is empty".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    fn at_rate(&self, rate: u32) -> Result<Vec<f32>> {
        if rate == self.sample_rate {
            return Ok(self.samples.clone());
        }
        let w = Waveform::mono(self.samples.clone(), self.sample_rate)?;
        Ok(resample(&w, rate)?.into_samples())
    }
}

/// Load every `.wav` in `dir` (sorted by file name) as a mono impulse response.
pub fn load_impulse_responses(dir: &Path) -> Result<Vec<ImpulseResponse>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let w = to_mono(&load_wav(p)?);
            ImpulseResponse::new(w.samples().to_vec(), w.sample_rate())
        })
        .collect()
}

pub fn pad_silence(w: &Waveform, pre: usize, post: usize) -> Waveform {
    let channels = w
        .channels()
        .iter()
        .map(|c| {
            let mut out = vec![0.0f32; pre];
            out.extend_from_slice(c);
            out.resize(pre + c.len() + post, 0.0);
            out
        })
        .collect();
    Waveform::new(channels, w.sample_rate()).expect("padding keeps channels aligned")
}

/// Add seeded Gaussian noise scaled so the realised SNR equals `snr_db`.
pub fn add_white_noise(w: &Waveform, snr_db: f64, seed: u64) -> Result<Waveform> {
    w.require_mono("add_white_noise")?;
    let p_sig = w.power();
    if p_sig <= 0.0 {
        return Err(Error::InvalidInput("SNR is undefined for an all-zero signal".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..w.len()).map(|_| rng.sample(StandardNormal)).collect();
    let p_noise = noise.iter().map(|x| x * x).sum::<f64>() / noise.len() as f64;
    let scale = (p_sig / (10f64.powf(snr_db / 10.0) * p_noise)).sqrt();
    let out = w
        .samples()
        .iter()
        .zip(&noise)
        .map(|(&x, n)| (x as f64 + scale * n) as f32)
        .collect();
    Waveform::mono(out, w.sample_rate())
}

/// Linear convolution truncated to the length of `x`.
pub fn convolve_truncated(x: &[f32], h: &[f32]) -> Vec<f64> {
    let n = x.len();
    if h.len() <= 64 {
        let mut y = vec![0.0f64; n];
        for (i, &xi) in x.iter().enumerate() {
            for (j, &hj) in h.iter().enumerate().take(n - i) {
                y[i + j] += xi as f64 * hj as f64;
            }
        }
        return y;
    }
    let size = (n + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let lift = |v: &[f32]| {
        let mut b = vec![Complex64::new(0.0, 0.0); size];
        for (c, &s) in b.iter_mut().zip(v) {
            c.re = s as f64;
        }
        b
    };
    let mut a = lift(x);
    let mut b = lift(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    a.iter_mut().zip(&b).for_each(|(p, q)| *p *= q);
    inv.process(&mut a);
    a[..n].iter().map(|c| c.re / size as f64).collect()
}

/// Reverberate with `ir`, truncate to the input length and restore the input's peak level.
pub fn convolve_reverb(w: &Waveform, ir: &ImpulseResponse) -> Result<Waveform> {
    w.require_mono("convolve_reverb")?;
    if ir.samples.is_empty() {
        return Err(Error::InvalidInput("impulse response is empty".into()));
    }
    let h = ir.at_rate(w.sample_rate())?;
    let y = convolve_truncated(w.samples(), &h);
    let peak_in = w.peak() as f64;
    let peak_out = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak_out > 0.0 { peak_in / peak_out } else { 0.0 };
    Waveform::mono(y.iter().map(|v| (v * gain) as f32).collect(), w.sample_rate())
}

pub fn time_reverse(w: &Waveform) -> Waveform {
    let channels = w
        .channels()
        .iter()
        .map(|c| c.iter().rev().copied().collect())
        .collect();
    Waveform::new(channels, w.sample_rate()).expect("reversal keeps channels aligned")
}

/// The concrete random choices made by one [`augment_chain`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPlan {
    pub pad: Option<(usize, usize)>,
    pub reverb: Option<usize>,
    pub noise: Option<(f64, u64)>,
    pub reverse: bool,
}

impl AugmentPlan {
    pub fn sample(cfg: &AugmentConfig, n_irs: usize, sample_rate: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_pad = (cfg.max_pad_sec * sample_rate as f64).round() as usize;
        // Every draw happens regardless of the outcome so one transform's
        // probability never perturbs another's parameters.
        let pad_on = rng.random::<f64>() < cfg.pad_prob;
        let pre = rng.random_range(0..=max_pad);
        let post = rng.random_range(0..=max_pad);
        let reverb_on = rng.random::<f64>() < cfg.reverb_prob;
        let ir_idx = rng.random_range(0..n_irs.max(1));
        let noise_on = rng.random::<f64>() < cfg.noise_prob;
        let [lo, hi] = cfg.snr_db_range;
        let snr = lo + (hi - lo) * rng.random::<f64>();
        let noise_seed = rng.random::<u64>();
        let reverse = rng.random::<f64>() < cfg.reverse_prob;
        Self {
            pad: pad_on.then_some((pre, post)),
            reverb: (reverb_on && n_irs > 0).then_some(ir_idx),
            noise: noise_on.then_some((snr, noise_seed)),
            reverse,
        }
    }

    /// Apply pad, reverb, noise, reverse in that order.
    pub fn apply(&self, w: &Waveform, irs: &[ImpulseResponse]) -> Result<Waveform> {
        let mut out = w.clone();
        if let Some((pre, post)) = self.pad {
            out = pad_silence(&out, pre, post);
        }
        if let Some(i) = self.reverb {
            let ir = irs
                .get(i)
                .ok_or_else(|| Error::InvalidInput(format!("no impulse response #{i}")))?;
            out = convolve_reverb(&out, ir)?;
        }
        if let Some((snr, seed)) = self.noise {
            // silent inputs stay silent
            if out.power() > 0.0 {
                out = add_white_noise(&out, snr, seed)?;
            }
        }
        if self.reverse {
            out = time_reverse(&out);
        }
        Ok(out)
    }
}

/// Apply each transform independently with its configured probability.
pub fn augment_chain(
    w: &Waveform,
    cfg: &AugmentConfig,
    irs: &[ImpulseResponse],
    seed: u64,
) -> Result<Waveform> {
    cfg.validate()?;
    AugmentPlan::sample(cfg, irs.len(), w.sample_rate(), seed).apply(w, irs)
}
