use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{durations_from_log, ConditioningInput, ConverterModel};
use crate::audio::{load_mono, log_mel_spectrogram, MelSpectrogram};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestRecord, Split};
use crate::predictor::LikabilityRating;
use crate::speaker::{load_embedding, SpeakerEmbedding};
use crate::tensorkit::{adam_step, batch_gradients, AdamConfig, AdamState, Tape, Var};
use crate::units::{dedup_runs, load_features, quantize, Codebook, FeatureExtractor, UnitSequence};

/// Rating-embedding gain used while training.
pub const TRAIN_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConverterTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub s: f64,
    /// Weight of the log-duration loss relative to the mel loss.
    pub duration_weight: f64,
    /// Anneal the learning rate to zero along a half cosine.
    pub cosine_decay: bool,
}

impl Default for ConverterTrainConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch_size: 4,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
            seed: 0,
            s: TRAIN_SCALE,
            duration_weight: 1.0,
            cosine_decay: true,
        }
    }
}

impl ConverterTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !self.s.is_finite() || !(self.duration_weight >= 0.0) {
            return Err(Error::Config("s must be finite and duration_weight >= 0".into()));
        }
        self.adam.validate()
    }
}

/// One training utterance: deduplicated units with their run lengths, the
/// conditioning inputs and the target mel (one frame per expanded unit).
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterExample {
    pub id: String,
    pub units: UnitSequence,
    pub speaker: SpeakerEmbedding,
    pub target: LikabilityRating,
    pub mel: MelSpectrogram,
}

impl ConverterExample {
    pub fn runs(&self) -> &[u32] {
        self.units.run_lengths.as_deref().expect("examples carry run lengths")
    }

    pub fn input(&self, s: f64) -> ConditioningInput {
        ConditioningInput {
            units: UnitSequence::new(self.units.ids.clone()),
            speaker: self.speaker.clone(),
            target: self.target,
            s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConverterHistory {
    pub steps: Vec<StepRecord>,
}

/// Teacher-forced reconstruction quality on a set of examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    /// Mel MSE in the model's standardised space.
    pub mel_mse: f64,
    /// Mel MSE in log-mel units.
    pub mel_mse_raw: f64,
    /// Mean |predicted - true| run length, in frames per token.
    pub duration_mae: f64,
}

/// Stretch run lengths measured on `from` frames onto `to` frames, keeping
/// every run at least one frame long.
pub fn rescale_runs(runs: &[u32], from: usize, to: usize) -> Vec<u32> {
    if from == to {
        return runs.to_vec();
    }
    let mut out = Vec::with_capacity(runs.len());
    let (mut cum, mut prev) = (0u64, 0u64);
    for &r in runs {
        cum += r as u64;
        let edge = ((cum as f64 * to as f64 / from as f64).round() as u64).max(prev + 1);
        out.push((edge - prev) as u32);
        prev = edge;
    }
    out
}

/// Pad by repeating the last frame, or crop, to exactly `t` frames.
fn fit_frames(mel: MelSpectrogram, t: usize) -> Result<MelSpectrogram> {
    if mel.n_frames() == t {
        return Ok(mel);
    }
    let d = mel.n_mels();
    let cfg = mel.config().clone();
    let n = mel.n_frames();
    let mut data = mel.into_data();
    data.truncate(t.min(n) * d);
    while data.len() < t * d {
        let last = data[data.len() - d..].to_vec();
        data.extend(last);
    }
    MelSpectrogram::from_frames(data, t, cfg)
}

fn record_example(
    manifest: &Manifest,
    r: &ManifestRecord,
    codebook: &Codebook,
    model: &ConverterModel,
) -> Result<ConverterExample> {
    let target = r
        .ratings_pred
        .or(r.ratings)
        .ok_or_else(|| Error::Data(format!("record {} has no ratings", r.id)))?;
    let emb_path = r
        .embedding
        .as_ref()
        .ok_or_else(|| Error::Data(format!("record {} has no speaker embedding", r.id)))?;
    let speaker = load_embedding(manifest.resolve(emb_path))?;
    let wave = load_mono(manifest.resolve(&r.audio), model.sample_rate)?;
    let mel = log_mel_spectrogram(&wave, &model.mel)?;
    let feats = match &r.features {
        Some(p) => load_features(manifest.resolve(p))?,
        None => FeatureExtractor::new(model.mel.clone()).extract(&wave)?,
    };
    if feats.dim() != codebook.dim() {
        return Err(Error::Data(format!(
            "record {}: features have {} dims, codebook {}",
            r.id,
            feats.dim(),
            codebook.dim()
        )));
    }
    let units = dedup_runs(&quantize(codebook, &feats)?);
    let runs = rescale_runs(units.run_lengths.as_deref().unwrap_or_default(), feats.n_frames(), mel.n_frames());
    let total = runs.iter().map(|&r| r as usize).sum();
    Ok(ConverterExample {
        id: r.id.clone(),
        units: UnitSequence::with_runs(units.ids, runs)?,
        speaker,
        target: LikabilityRating::new(target),
        mel: fit_frames(mel, total)?,
    })
}

/// Build training examples from manifest records, optionally restricted to
/// one split. Predicted ratings are preferred over ground truth.
pub fn prepare_examples(
    manifest: &Manifest,
    split: Option<Split>,
    codebook: &Codebook,
    model: &ConverterModel,
) -> Result<Vec<ConverterExample>> {
    let recs: Vec<_> = manifest.records.iter().filter(|r| split.is_none_or(|s| r.split == s)).collect();
    recs.par_iter().map(|r| record_example(manifest, r, codebook, model)).collect()
}

fn fit_mel_norm(model: &mut ConverterModel, examples: &[ConverterExample]) -> Result<()> {
    let d = model.config.n_mels;
    let (mut sum, mut sq, mut n) = (vec![0.0; d], vec![0.0; d], 0usize);
    for ex in examples {
        if ex.mel.n_mels() != d {
            return Err(Error::Shape(format!("example {} has {} mel bins", ex.id, ex.mel.n_mels())));
        }
        for row in ex.mel.data().chunks(d) {
            for j in 0..d {
                sum[j] += row[j];
                sq[j] += row[j] * row[j];
            }
        }
        n += ex.mel.n_frames();
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    model.mel_std = sq.iter().zip(&mean).map(|(s, m)| (s / n as f64 - m * m).max(0.0).sqrt().max(1e-3)).collect();
    model.mel_mean = mean;
    Ok(())
}

/// Teacher-forced mel MSE plus weighted log-duration MSE for one example.
pub fn example_loss(
    model: &ConverterModel,
    tape: &mut Tape,
    vars: &[Var],
    ex: &ConverterExample,
    s: f64,
    duration_weight: f64,
) -> Result<Var> {
    let runs = ex.runs();
    let h = model.encode(tape, vars, &ex.input(s))?;
    let log_d = model.log_durations(tape, vars, h)?;
    let dur_target: Vec<f64> = runs.iter().map(|&r| (r as f64).ln()).collect();
    let dur_loss = tape.mse(log_d, &dur_target)?;
    let frames = model.regulate(tape, vars, h, runs)?;
    let y = model.decode(tape, vars, frames)?;
    let mel_loss = tape.mse(y, &model.normalise(ex.mel.data()))?;
    let dur_loss = tape.scale(dur_loss, duration_weight);
    tape.add(mel_loss, dur_loss)
}

/// Fit the mel normalisation on `examples`, then run `cfg.steps` Adam steps
/// over shuffled minibatches. Parameters come back rounded to f32.
pub fn train_on_examples(
    mut model: ConverterModel,
    examples: &[ConverterExample],
    cfg: &ConverterTrainConfig,
) -> Result<(ConverterModel, ConverterHistory)> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Data("no converter training examples".into()));
    }
    fit_mel_norm(&mut model, examples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params);
    let mut history = ConverterHistory::default();
    let mut order: Vec<usize> = Vec::new();
    for step in 0..cfg.steps {
        if order.len() < cfg.batch_size.min(examples.len()) {
            let mut fresh: Vec<usize> = (0..examples.len()).collect();
            fresh.shuffle(&mut rng);
            order.extend(fresh);
        }
        let take = cfg.batch_size.min(examples.len());
        let batch: Vec<usize> = order.drain(..take).collect();
        let (loss, grads) = batch_gradients(&model.params, &batch, |tape, vars, &i| {
            example_loss(&model, tape, vars, &examples[i], cfg.s, cfg.duration_weight)
        })?;
        let loss = loss / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite converter loss at step {step}")));
        }
        let mut adam_cfg = cfg.adam.clone();
        if cfg.cosine_decay {
            adam_cfg.lr *= 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / cfg.steps as f64).cos());
        }
        adam_step(&mut model.params, &grads, &mut adam, &adam_cfg)?;
        history.steps.push(StepRecord { step, loss });
        if step % 100 == 0 {
            log::info!("converter step {step}: loss {loss:.5}");
        }
    }
    model.params.round_to_f32();
    Ok((model, history))
}

/// Train on the train split of an annotated manifest.
pub fn train_converter(
    model: ConverterModel,
    manifest: &Manifest,
    codebook: &Codebook,
    cfg: &ConverterTrainConfig,
) -> Result<(ConverterModel, ConverterHistory)> {
    if codebook.k() != model.config.vocab {
        return Err(Error::Config(format!(
            "codebook has {} units, converter vocabulary is {}",
            codebook.k(),
            model.config.vocab
        )));
    }
    let examples = prepare_examples(manifest, Some(Split::Train), codebook, &model)?;
    train_on_examples(model, &examples, cfg)
}

/// Teacher-forced mel error and duration-head error over `examples`, with
/// the rating embedding at gain `s`.
pub fn fit_stats(model: &ConverterModel, examples: &[ConverterExample], s: f64) -> Result<FitStats> {
    if examples.is_empty() {
        return Err(Error::InvalidInput("no examples to score".into()));
    }
    let per = examples
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new();
            let vars = tape.params(&model.params);
            let h = model.encode(&mut tape, &vars, &ex.input(s))?;
            let log_d = model.log_durations(&mut tape, &vars, h)?;
            let pred = durations_from_log(tape.value(log_d).data());
            let frames = model.regulate(&mut tape, &vars, h, ex.runs())?;
            let y = model.decode(&mut tape, &vars, frames)?;
            let y = tape.value(y).data();
            let target = model.normalise(ex.mel.data());
            let norm_se: f64 = y.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
            let raw = model.denormalise(y);
            let raw_se: f64 = raw.iter().zip(ex.mel.data()).map(|(a, b)| (a - b).powi(2)).sum();
            let dur_ae: f64 = pred.iter().zip(ex.runs()).map(|(&p, &t)| (p as f64 - t as f64).abs()).sum();
            Ok((norm_se, raw_se, y.len(), dur_ae, pred.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut ns, mut rs, mut nv, mut da, mut nt) = (0.0, 0.0, 0usize, 0.0, 0usize);
    for (a, b, c, d, e) in per {
        ns += a;
        rs += b;
        nv += c;
        da += d;
        nt += e;
    }
    Ok(FitStats {
        mel_mse: ns / nv as f64,
        mel_mse_raw: rs / nv as f64,
        duration_mae: da / nt as f64,
    })
}

/// Teacher-forced reconstruction of one example, denormalised.
pub fn reconstruct(model: &ConverterModel, ex: &ConverterExample, s: f64) -> Result<MelSpectrogram> {
    super::model::synthesize(model, &ex.input(s), Some(ex.runs()))
}
