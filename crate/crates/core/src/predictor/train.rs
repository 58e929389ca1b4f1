use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{predict_raw, PredictorModel, MIN_FRAMES};
use super::calibration::{fit_calibration, CalibrationParams};
use super::LikabilityRating;
use crate::audio::{load_mono, log_mel_spectrogram, Waveform};
use crate::augment::{augment_chain, load_impulse_responses, AugmentConfig, ImpulseResponse};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, Split};
use crate::metrics::spearman_srcc;
use crate::tensorkit::{adam_step, batch_gradients, AdamConfig, AdamState, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Longer clips are randomly cropped to this length during training.
    pub crop_sec: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
            seed: 0,
            patience: None,
            crop_sec: 4.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be positive when set".into()));
        }
        if !(self.crop_sec > 0.0) {
            return Err(Error::Config("crop_sec must be positive".into()));
        }
        self.adam.validate()?;
        self.augment.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_srcc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

struct Example {
    wave: Waveform,
    target: [f64; 4],
}

fn load_split(manifest: &Manifest, split: Split, sample_rate: u32) -> Result<Vec<Example>> {
    let recs: Vec<_> = manifest.split(split).collect();
    if recs.is_empty() {
        return Err(Error::Data(format!("manifest has no {split:?} records")));
    }
    recs.par_iter()
        .map(|r| {
            let target = r
                .ratings
                .ok_or_else(|| Error::Data(format!("record {} has no ratings", r.id)))?;
            let wave = load_mono(manifest.resolve(&r.audio), sample_rate)?;
            Ok(Example { wave, target })
        })
        .collect()
}

/// Per-bin mean and std of the log-mel frames of the given clips.
fn fit_input_norm(model: &PredictorModel, clips: &[Example]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = model.mel.n_mels;
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    let mut n = 0usize;
    for c in clips {
        let m = log_mel_spectrogram(&c.wave, &model.mel)?;
        for row in m.data().chunks(d) {
            for j in 0..d {
                sum[j] += row[j];
                sq[j] += row[j] * row[j];
            }
        }
        n += m.n_frames();
    }
    if n == 0 {
        return Err(Error::Data("training clips are shorter than one frame".into()));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(s, m)| (s / n as f64 - m * m).max(0.0).sqrt().max(1e-3))
        .collect();
    Ok((mean, std))
}

/// Random crop to `max_len` samples, or zero-pad to the minimum usable length.
fn crop(w: &Waveform, max_len: usize, min_len: usize, rng: &mut ChaCha8Rng) -> Waveform {
    let s = w.samples();
    let out = if s.len() > max_len {
        let off = rng.random_range(0..=s.len() - max_len);
        s[off..off + max_len].to_vec()
    } else if s.len() < min_len {
        let mut v = s.to_vec();
        v.resize(min_len, 0.0);
        v
    } else {
        s.to_vec()
    };
    Waveform::mono(out, w.sample_rate()).expect("mono input")
}

fn validation_srcc(model: &PredictorModel, val: &[Example]) -> Result<f64> {
    let preds = val
        .par_iter()
        .map(|e| {
            let w = crop(&e.wave, usize::MAX, min_samples(model), &mut ChaCha8Rng::seed_from_u64(0));
            predict_raw(model, &log_mel_spectrogram(&w, &model.mel)?)
        })
        .collect::<Result<Vec<LikabilityRating>>>()?;
    let p: Vec<f64> = preds.iter().flat_map(|r| r.values).collect();
    let t: Vec<f64> = val.iter().flat_map(|e| e.target).collect();
    // constant predictions have no ranking information
    Ok(spearman_srcc(&p, &t).unwrap_or(f64::NEG_INFINITY))
}

fn min_samples(model: &PredictorModel) -> usize {
    model.mel.win + (MIN_FRAMES - 1) * model.mel.hop
}

/// Train with augmented per-example MSE and keep the epoch with the best
/// pooled validation SRCC. The returned parameters are rounded to f32.
pub fn train(
    mut model: PredictorModel,
    manifest: &Manifest,
    cfg: &TrainConfig,
) -> Result<(PredictorModel, TrainHistory)> {
    cfg.validate()?;
    let train_set = load_split(manifest, Split::Train, model.sample_rate)?;
    let val_set = load_split(manifest, Split::Val, model.sample_rate)?;
    let irs: Vec<ImpulseResponse> = match &cfg.augment.ir_dir {
        Some(dir) => load_impulse_responses(dir)?,
        None => Vec::new(),
    };
    let (mean, std) = fit_input_norm(&model, &train_set)?;
    model.input_mean = mean;
    model.input_std = std;

    let max_len = (cfg.crop_sec * model.sample_rate as f64).round() as usize;
    let min_len = min_samples(&model);
    let mut adam = AdamState::new(&model.params);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, PredictorModel)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let jobs: Vec<(usize, u64)> = batch.iter().map(|&i| (i, rng.random())).collect();
            let (loss, grads) = batch_gradients(&model.params, &jobs, |tape, vars, &(i, seed)| {
                example_loss(&model, tape, vars, &train_set[i], &cfg.augment, &irs, seed, max_len, min_len)
            })?;
            loss_sum += loss;
            adam_step(&mut model.params, &grads, &mut adam, &cfg.adam)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite training loss at epoch {epoch}")));
        }
        let val_srcc = validation_srcc(&model, &val_set)?;
        log::info!("epoch {epoch}: loss {train_loss:.5} val SRCC {val_srcc:.4}");
        history.epochs.push(EpochRecord { epoch, train_loss, val_srcc });
        if best.as_ref().is_none_or(|(b, _)| val_srcc > *b) {
            best = Some((val_srcc, model.clone()));
            history.best_epoch = epoch;
        }
        if let Some(p) = cfg.patience {
            if epoch - history.best_epoch >= p {
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }
    let (_, mut best) = best.expect("at least one epoch ran");
    best.params.round_to_f32();
    Ok((best, history))
}

#[allow(clippy::too_many_arguments)]
fn example_loss(
    model: &PredictorModel,
    tape: &mut Tape,
    vars: &[Var],
    ex: &Example,
    aug: &AugmentConfig,
    irs: &[ImpulseResponse],
    seed: u64,
    max_len: usize,
    min_len: usize,
) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = augment_chain(&ex.wave, aug, irs, rng.random())?;
    let w = crop(&w, max_len, min_len, &mut rng);
    let x = model.normalise(&log_mel_spectrogram(&w, &model.mel)?)?;
    let xv = tape.leaf(x);
    let y = model.forward(tape, vars, xv)?;
    tape.mse(y, &ex.target)
}

/// Raw predictions and ground truth for every record of `split`, in order.
pub fn predict_split(
    model: &PredictorModel,
    manifest: &Manifest,
    split: Split,
) -> Result<Vec<(LikabilityRating, LikabilityRating)>> {
    let recs: Vec<_> = manifest.split(split).collect();
    recs.par_iter()
        .map(|r| {
            let truth = r
                .ratings_orig
                .or(r.ratings)
                .ok_or_else(|| Error::Data(format!("record {} has no ratings", r.id)))?;
            let w = load_mono(manifest.resolve(&r.audio), model.sample_rate)?;
            let w = crop(&w, usize::MAX, min_samples(model), &mut ChaCha8Rng::seed_from_u64(0));
            Ok((predict_raw(model, &log_mel_spectrogram(&w, &model.mel)?)?, LikabilityRating::new(truth)))
        })
        .collect()
}

/// Fit the post-filter on the predictions for one split.
pub fn calibrate_on_split(model: &PredictorModel, manifest: &Manifest, split: Split) -> Result<CalibrationParams> {
    let (p, t): (Vec<_>, Vec<_>) = predict_split(model, manifest, split)?.into_iter().unzip();
    fit_calibration(&p, &t)
}
