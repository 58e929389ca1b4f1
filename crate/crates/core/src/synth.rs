//! Planted synthetic corpus: vowel-like harmonic speech from a few speakers,
//! with a per-clip spectral tilt that drives the listener ratings.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav_pcm16, Waveform};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestRecord, Split};
use crate::speaker::{save_embedding, SpeakerEmbedding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub clips_per_speaker: usize,
    /// Train / val / test counts; must add up to the clip total.
    pub split: [usize; 3],
    pub clip_sec: f64,
    pub sample_rate: u32,
    pub embedding_dim: usize,
    /// Std of per-utterance embedding noise around the speaker centroid.
    pub embedding_noise: f64,
    /// Std of rating noise.
    pub rating_noise: f64,
    /// Peak-to-peak tilt in dB across the mel range for tilt = +-1.
    pub tilt_db: f64,
    pub n_impulse_responses: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 4,
            clips_per_speaker: 75,
            split: [200, 50, 50],
            clip_sec: 1.0,
            sample_rate: 22050,
            embedding_dim: 16,
            embedding_noise: 0.15,
            rating_noise: 0.05,
            tilt_db: 30.0,
            n_impulse_responses: 3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn total(&self) -> usize {
        self.n_speakers * self.clips_per_speaker
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_speakers == 0 || self.clips_per_speaker == 0 {
            return Err(Error::Config("need at least one speaker and one clip".into()));
        }
        if self.split.iter().sum::<usize>() != self.total() {
            return Err(Error::Config(format!(
                "split {:?} does not add up to {} clips",
                self.split,
                self.total()
            )));
        }
        if !(self.clip_sec >= 0.25) || self.sample_rate < 16000 || self.embedding_dim == 0 {
            return Err(Error::Config("clip_sec >= 0.25, sample_rate >= 16000 and embedding_dim >= 1 required".into()));
        }
        Ok(())
    }
}

/// Vowel-like phone inventory: symbol and first three formants in Hz.
pub const PHONES: [(char, [f64; 3]); 8] = [
    ('a', [730.0, 1090.0, 2440.0]),
    ('i', [270.0, 2290.0, 3010.0]),
    ('u', [300.0, 870.0, 2240.0]),
    ('e', [530.0, 1840.0, 2480.0]),
    ('o', [570.0, 840.0, 2410.0]),
    ('A', [660.0, 1720.0, 2410.0]),
    ('E', [490.0, 1350.0, 1690.0]),
    ('O', [520.0, 1190.0, 2390.0]),
];

/// Per-group rating slope and offset against tilt.
const RATING_SLOPE: [f64; 4] = [0.9, 0.75, 0.85, 0.7];
const RATING_OFFSET: [f64; 4] = [0.0, 0.05, -0.05, 0.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub f0: f64,
    pub formant_scale: f64,
    pub centroid: Vec<f64>,
}

/// One synthetic utterance before it is written to disk.
#[derive(Debug, Clone)]
pub struct SynthClip {
    pub wave: Waveform,
    pub text: String,
    pub tilt: f64,
    pub ratings: [f64; 4],
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

/// Tilt gain in dB at frequency `f`, linear in mel position up to 8 kHz.
pub fn tilt_gain_db(tilt: f64, tilt_db: f64, f: f64) -> f64 {
    tilt * tilt_db * (hz_to_mel(f) / hz_to_mel(8000.0) - 0.5)
}

/// Noise-free group ratings implied by a tilt value.
pub fn planted_ratings(tilt: f64) -> [f64; 4] {
    std::array::from_fn(|g| (RATING_SLOPE[g] * tilt + RATING_OFFSET[g]).clamp(-1.0, 1.0))
}

pub fn speaker_profiles(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<SpeakerProfile> {
    (0..cfg.n_speakers)
        .map(|i| {
            // spread f0 and formant scale so speakers are distinguishable
            let frac = if cfg.n_speakers > 1 { i as f64 / (cfg.n_speakers - 1) as f64 } else { 0.5 };
            SpeakerProfile {
                f0: 95.0 + 140.0 * frac + rng.random_range(-8.0..8.0),
                formant_scale: 0.85 + 0.3 * ((i * 7 % cfg.n_speakers.max(1)) as f64 / cfg.n_speakers.max(1) as f64)
                    + rng.random_range(-0.02..0.02),
                centroid: (0..cfg.embedding_dim).map(|_| rng.sample(StandardNormal)).collect(),
            }
        })
        .collect()
}

/// Synthesize one clip with the given tilt.
pub fn synth_clip(spk: &SpeakerProfile, tilt: f64, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> SynthClip {
    let sr = cfg.sample_rate as f64;
    let n = (cfg.clip_sec * sr).round() as usize;
    let hop = 256usize;
    // segment boundaries on a frame grid
    let mut segs: Vec<(usize, usize)> = Vec::new();
    let mut pos = 0;
    while pos < n {
        let len = rng.random_range(5..=20) * hop;
        let phone = rng.random_range(0..PHONES.len());
        let len = len.min(n - pos);
        segs.push((phone, len));
        pos += len;
    }
    let text: String = segs.iter().map(|&(p, _)| PHONES[p].0).collect();
    let f0 = spk.f0 * (1.0 + rng.random_range(-0.03..0.03));
    let n_harm = ((7800.0 / f0) as usize).max(1);
    let amps_for = |phone: usize| -> Vec<f64> {
        let formants = PHONES[phone].1.map(|f| f * spk.formant_scale);
        (1..=n_harm)
            .map(|h| {
                let f = h as f64 * f0;
                let env: f64 = formants
                    .iter()
                    .enumerate()
                    .map(|(k, &fm)| {
                        let bw = 80.0 + 40.0 * k as f64;
                        1.0 / (1.0 + ((f - fm) / bw).powi(2))
                    })
                    .sum::<f64>()
                    + 0.02;
                env * 10f64.powf(tilt_gain_db(tilt, cfg.tilt_db, f) / 20.0)
            })
            .collect()
    };
    let seg_amps: Vec<Vec<f64>> = segs.iter().map(|&(p, _)| amps_for(p)).collect();
    let phase0: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let xfade = 128usize;
    let mut out = vec![0.0f64; n];
    let mut start = 0;
    for (si, &(_, len)) in segs.iter().enumerate() {
        for i in 0..len {
            let t = start + i;
            // blend into the next segment's spectrum near the boundary
            let (a, b, w) = if i + xfade >= len && si + 1 < segs.len() {
                let w = (i + xfade - len) as f64 / (2 * xfade) as f64;
                (&seg_amps[si], &seg_amps[si + 1], w)
            } else if i < xfade && si > 0 {
                let w = 0.5 + i as f64 / (2 * xfade) as f64;
                (&seg_amps[si - 1], &seg_amps[si], w)
            } else {
                (&seg_amps[si], &seg_amps[si], 0.0)
            };
            let tt = t as f64 / sr;
            let mut v = 0.0;
            for h in 0..n_harm {
                let amp = a[h] * (1.0 - w) + b[h] * w;
                v += amp * (std::f64::consts::TAU * (h + 1) as f64 * f0 * tt + phase0[h]).sin();
            }
            out[t] = v;
        }
        start += len;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let floor = Normal::new(0.0, 1e-3).expect("valid std");
    let samples: Vec<f32> = out
        .iter()
        .map(|v| (0.5 * v / peak + floor.sample(rng)) as f32)
        .collect();
    let noise = Normal::new(0.0, cfg.rating_noise.max(0.0)).expect("valid std");
    let clean = planted_ratings(tilt);
    let ratings = std::array::from_fn(|g| {
        let r = if cfg.rating_noise > 0.0 { clean[g] + noise.sample(rng) } else { clean[g] };
        r.clamp(-1.0, 1.0)
    });
    SynthClip {
        wave: Waveform::mono(samples, cfg.sample_rate).expect("finite samples"),
        text,
        tilt,
        ratings,
    }
}

/// Exponentially decaying noise burst with the given RT60 in seconds.
pub fn synth_impulse_response(rt60: f64, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = (rt60 * sample_rate as f64).round().max(1.0) as usize;
    let decay = 6.91 / (rt60 * sample_rate as f64);
    let mut ir: Vec<f32> = (0..n)
        .map(|i| (rng.sample::<f64, _>(StandardNormal) * (-decay * i as f64).exp()) as f32)
        .collect();
    ir[0] = 1.0;
    ir
}

/// Write the corpus (WAVs, speaker embeddings, impulse responses and a
/// manifest) under `out_dir` and return the manifest.
pub fn synth_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    for sub in ["wav", "emb", "ir"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let speakers = speaker_profiles(cfg, &mut rng);

    let mut splits: Vec<Split> = [Split::Train, Split::Val, Split::Test]
        .iter()
        .zip(cfg.split)
        .flat_map(|(&s, k)| std::iter::repeat_n(s, k))
        .collect();
    // interleave speakers across splits
    use rand::seq::SliceRandom;
    splits.shuffle(&mut rng);

    let emb_noise = Normal::new(0.0, cfg.embedding_noise.max(0.0)).expect("valid std");
    let mut records = Vec::with_capacity(cfg.total());
    for (s, spk) in speakers.iter().enumerate() {
        for c in 0..cfg.clips_per_speaker {
            let idx = s * cfg.clips_per_speaker + c;
            let id = format!("spk{s}_{c:03}");
            let tilt = rng.random_range(-1.0..1.0);
            let clip = synth_clip(spk, tilt, cfg, &mut rng);
            let wav_rel = Path::new("wav").join(format!("{id}.wav"));
            write_wav_pcm16(out_dir.join(&wav_rel), &clip.wave)?;
            let emb: Vec<f64> = spk
                .centroid
                .iter()
                .map(|v| v + if cfg.embedding_noise > 0.0 { emb_noise.sample(&mut rng) } else { 0.0 })
                .collect();
            let emb_rel = Path::new("emb").join(format!("{id}.lkbe"));
            save_embedding(out_dir.join(&emb_rel), &SpeakerEmbedding::new(emb)?)?;
            let mut rec = ManifestRecord::new(id, wav_rel, splits[idx], format!("spk{s}"));
            rec.ratings = Some(clip.ratings);
            rec.text = Some(clip.text);
            rec.embedding = Some(emb_rel);
            records.push(rec);
        }
    }
    for i in 0..cfg.n_impulse_responses {
        let rt60 = rng.random_range(0.1..0.3);
        let ir = synth_impulse_response(rt60, cfg.sample_rate, &mut rng);
        let peak = ir.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        let ir: Vec<f32> = ir.iter().map(|v| v / peak * 0.9).collect();
        write_wav_pcm16(
            out_dir.join("ir").join(format!("ir{i}.wav")),
            &Waveform::mono(ir, cfg.sample_rate)?,
        )?;
    }
    let manifest = Manifest::new(records, out_dir);
    manifest.save(out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
