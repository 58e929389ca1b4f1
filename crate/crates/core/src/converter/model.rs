use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{MelConfig, MelSpectrogram, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::predictor::LikabilityRating;
use crate::speaker::SpeakerEmbedding;
use crate::tensorkit::{load_checkpoint, save_checkpoint, ContextSpec, ParamSet, Tape, Tensor, Var};
use crate::units::UnitSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConverterConfig {
    /// Unit vocabulary size; must match the codebook.
    pub vocab: usize,
    pub embed_dim: usize,
    pub speaker_dim: usize,
    pub encoder_blocks: usize,
    pub decoder_blocks: usize,
    pub kernel: usize,
    pub n_mels: usize,
    pub duration_hidden: usize,
    pub seed: u64,
}

impl Default for ConverterConfig {
    fn default() -> Self {
        Self {
            vocab: 100,
            embed_dim: 128,
            speaker_dim: 16,
            encoder_blocks: 2,
            decoder_blocks: 2,
            kernel: 3,
            n_mels: 80,
            duration_hidden: 64,
            seed: 0,
        }
    }
}

impl ConverterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab == 0 || self.embed_dim == 0 || self.speaker_dim == 0 || self.n_mels == 0 || self.duration_hidden == 0 {
            return Err(Error::Config("converter sizes must be positive".into()));
        }
        ContextSpec::symmetric(self.kernel).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Inputs for one conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningInput {
    /// Deduplicated unit ids.
    pub units: UnitSequence,
    pub speaker: SpeakerEmbedding,
    pub target: LikabilityRating,
    /// Gain on the rating embedding.
    pub s: f64,
}

impl ConditioningInput {
    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() {
            return Err(Error::InvalidInput("no units to convert".into()));
        }
        if !self.s.is_finite() || self.target.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("s and target ratings must be finite".into()));
        }
        Ok(())
    }
}

/// Tape handles for the conditioning sum, before the encoder.
#[derive(Debug, Clone, Copy)]
pub struct Conditioning {
    /// Token embeddings plus speaker projection.
    pub base: Var,
    /// `s * rating_proj(target)` as a 1 x E row.
    pub rating: Var,
    /// `base + rating` broadcast over tokens.
    pub hidden: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConverterModel {
    pub config: ConverterConfig,
    pub params: ParamSet,
    /// Mel targets are modelled after per-bin standardisation.
    pub mel_mean: Vec<f64>,
    pub mel_std: Vec<f64>,
    /// Front end whose frames the model is trained to produce.
    pub mel: MelConfig,
    pub sample_rate: u32,
}

const BLOCK_NAMES: [&str; 2] = ["enc", "dec"];

/// Width of the within-run position code added to frame states.
pub const POS_FEATURES: usize = 8;

/// Position of every frame inside its run: `sin(pi k u)` and `cos(pi k u)`
/// for `k = 1..=4`, where `u = (i + 0.5) / d` for frame `i` of a run of `d`.
pub fn run_position_features(durations: &[u32]) -> Tensor {
    let total: usize = durations.iter().map(|&d| d as usize).sum();
    let mut data = Vec::with_capacity(total * POS_FEATURES);
    for &d in durations {
        for i in 0..d {
            let u = (i as f64 + 0.5) / d as f64;
            for k in 1..=POS_FEATURES / 2 {
                let a = std::f64::consts::PI * k as f64 * u;
                data.push(a.sin());
                data.push(a.cos());
            }
        }
    }
    Tensor::matrix(total, POS_FEATURES, data).expect("rows of POS_FEATURES")
}

impl ConverterModel {
    pub fn new(config: ConverterConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let e = config.embed_dim;
        let mut p = ParamSet::new();
        p.push("token_emb", Tensor::kaiming_uniform(&[config.vocab, e], e, &mut rng));
        p.push("speaker_proj.weight", Tensor::kaiming_uniform(&[config.speaker_dim, e], config.speaker_dim, &mut rng));
        p.push("speaker_proj.bias", Tensor::zeros(&[e]));
        p.push("rating_proj.weight", Tensor::kaiming_uniform(&[4, e], 4, &mut rng));
        for (prefix, n) in BLOCK_NAMES.iter().zip([config.encoder_blocks, config.decoder_blocks]) {
            for i in 0..n {
                let fan = config.kernel * e;
                // small residual branches keep the initial network near identity
                let mut w = Tensor::kaiming_uniform(&[fan, e], fan, &mut rng);
                w.data_mut().iter_mut().for_each(|v| *v = (*v * 0.5) as f32 as f64);
                p.push(format!("{prefix}{i}.weight"), w);
                p.push(format!("{prefix}{i}.bias"), Tensor::zeros(&[e]));
            }
        }
        let h = config.duration_hidden;
        p.push("dur1.weight", Tensor::kaiming_uniform(&[e, h], e, &mut rng));
        p.push("dur1.bias", Tensor::zeros(&[h]));
        p.push("dur2.weight", Tensor::kaiming_uniform(&[h, 1], h, &mut rng));
        p.push("dur2.bias", Tensor::zeros(&[1]));
        p.push("pos_proj.weight", Tensor::kaiming_uniform(&[POS_FEATURES, e], POS_FEATURES, &mut rng));
        // zero head: the untrained model predicts the mean frame
        p.push("mel_head.weight", Tensor::zeros(&[e, config.n_mels]));
        p.push("mel_head.bias", Tensor::zeros(&[config.n_mels]));
        Ok(Self {
            params: p,
            mel_mean: vec![0.0; config.n_mels],
            mel_std: vec![1.0; config.n_mels],
            mel: MelConfig {
                n_mels: config.n_mels,
                ..MelConfig::default()
            },
            sample_rate: DEFAULT_SAMPLE_RATE,
            config,
        })
    }

    fn var(&self, vars: &[Var], name: &str) -> Var {
        vars[self.params.index_of(name).expect("parameter registered in new()")]
    }

    /// Token embeddings + speaker projection + `s` x rating projection.
    pub fn conditioning(&self, tape: &mut Tape, vars: &[Var], inp: &ConditioningInput) -> Result<Conditioning> {
        inp.validate()?;
        if inp.speaker.dim() != self.config.speaker_dim {
            return Err(Error::Shape(format!(
                "speaker embedding has {} dims, model expects {}",
                inp.speaker.dim(),
                self.config.speaker_dim
            )));
        }
        let ids: Vec<usize> = inp.units.ids.iter().map(|&i| i as usize).collect();
        let tok = tape.embed(self.var(vars, "token_emb"), &ids)?;
        let spk_in = tape.leaf(Tensor::row(inp.speaker.values().to_vec()));
        let spk = tape.dense(spk_in, self.var(vars, "speaker_proj.weight"), Some(self.var(vars, "speaker_proj.bias")))?;
        let base = tape.add_row(tok, spk)?;
        let r_in = tape.leaf(Tensor::row(inp.target.values.to_vec()));
        let r = tape.dense(r_in, self.var(vars, "rating_proj.weight"), None)?;
        let rating = tape.scale(r, inp.s);
        let hidden = tape.add_row(base, rating)?;
        Ok(Conditioning { base, rating, hidden })
    }

    fn blocks(&self, tape: &mut Tape, vars: &[Var], prefix: &str, n: usize, mut h: Var) -> Result<Var> {
        let ctx = ContextSpec::symmetric(self.config.kernel)?;
        let pad = self.config.kernel / 2;
        for i in 0..n {
            let p = tape.pad_rows(h, pad, pad)?;
            let c = tape.tdnn(p, &ctx, self.var(vars, &format!("{prefix}{i}.weight")), self.var(vars, &format!("{prefix}{i}.bias")))?;
            let c = tape.relu(c);
            h = tape.add(h, c)?;
        }
        Ok(h)
    }

    /// Conditioning followed by the encoder blocks: one row per token.
    pub fn encode(&self, tape: &mut Tape, vars: &[Var], inp: &ConditioningInput) -> Result<Var> {
        let c = self.conditioning(tape, vars, inp)?;
        self.blocks(tape, vars, "enc", self.config.encoder_blocks, c.hidden)
    }

    /// Log-duration per token, `n x 1`.
    pub fn log_durations(&self, tape: &mut Tape, vars: &[Var], hidden: Var) -> Result<Var> {
        let h = tape.dense(hidden, self.var(vars, "dur1.weight"), Some(self.var(vars, "dur1.bias")))?;
        let h = tape.relu(h);
        tape.dense(h, self.var(vars, "dur2.weight"), Some(self.var(vars, "dur2.bias")))
    }

    /// Length regulation followed by the position code projection.
    pub fn regulate(&self, tape: &mut Tape, vars: &[Var], hidden: Var, durations: &[u32]) -> Result<Var> {
        if durations.contains(&0) {
            return Err(Error::InvalidInput("durations must be positive".into()));
        }
        let counts: Vec<usize> = durations.iter().map(|&d| d as usize).collect();
        let frames = tape.repeat_rows(hidden, &counts)?;
        let pos = tape.leaf(run_position_features(durations));
        let pos = tape.dense(pos, self.var(vars, "pos_proj.weight"), None)?;
        tape.add(frames, pos)
    }

    /// Decoder blocks and mel head on frame-rate states; output is standardised mel.
    pub fn decode(&self, tape: &mut Tape, vars: &[Var], frames: Var) -> Result<Var> {
        let h = self.blocks(tape, vars, "dec", self.config.decoder_blocks, frames)?;
        tape.dense(h, self.var(vars, "mel_head.weight"), Some(self.var(vars, "mel_head.bias")))
    }

    /// Undo the mel standardisation.
    pub fn denormalise(&self, data: &[f64]) -> Vec<f64> {
        data.chunks(self.config.n_mels)
            .flat_map(|row| row.iter().zip(self.mel_mean.iter().zip(&self.mel_std)).map(|(v, (m, s))| v * s + m))
            .collect()
    }

    pub fn normalise(&self, data: &[f64]) -> Vec<f64> {
        data.chunks(self.config.n_mels)
            .flat_map(|row| row.iter().zip(self.mel_mean.iter().zip(&self.mel_std)).map(|(v, (m, s))| (v - m) / s))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mean = Tensor::row(self.mel_mean.clone());
        let std = Tensor::row(self.mel_std.clone());
        let cfg = Tensor::row(self.mel.to_row(self.sample_rate));
        let extra = [("mel_norm.mean", &mean), ("mel_norm.std", &std), ("mel.config", &cfg)];
        save_checkpoint(path, self.params.iter().chain(extra))
    }

    /// Load a checkpoint; the architecture is read off the tensor shapes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let named = load_checkpoint(path)?;
        let dims = |name: &str| -> Result<Vec<usize>> {
            named
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.dims().to_vec())
                .ok_or_else(|| Error::format("checkpoint", format!("missing tensor {name}")))
        };
        let tok = dims("token_emb")?;
        let spk = dims("speaker_proj.weight")?;
        let dur = dims("dur1.weight")?;
        let head = dims("mel_head.weight")?;
        if tok.len() != 2 || spk.len() != 2 || dur.len() != 2 || head.len() != 2 {
            return Err(Error::format("checkpoint", "converter weights must be matrices"));
        }
        let count = |prefix: &str| named.iter().filter(|(n, _)| n.starts_with(prefix) && n.ends_with(".weight")).count();
        let e = tok[1];
        let kernel = dims("enc0.weight").or_else(|_| dims("dec0.weight")).map(|d| d[0] / e).unwrap_or(3);
        let config = ConverterConfig {
            vocab: tok[0],
            embed_dim: e,
            speaker_dim: spk[0],
            encoder_blocks: count("enc"),
            decoder_blocks: count("dec"),
            kernel,
            n_mels: head[1],
            duration_hidden: dur[1],
            seed: 0,
        };
        let mut model = Self::new(config)?;
        let mut params = Vec::new();
        let mut mel_row = None;
        for (n, t) in named {
            match n.as_str() {
                "mel.config" => mel_row = Some(t.into_data()),
                "mel_norm.mean" => model.mel_mean = t.into_data(),
                "mel_norm.std" => model.mel_std = t.into_data(),
                _ => params.push((n, t)),
            }
        }
        let mel_row = mel_row.ok_or_else(|| Error::format("checkpoint", "missing tensor mel.config"))?;
        (model.sample_rate, model.mel) = MelConfig::from_row(&mel_row)?;
        if model.mel.n_mels != model.config.n_mels {
            return Err(Error::format("checkpoint", "mel config disagrees with the mel head"));
        }
        if params.len() != model.params.len() {
            return Err(Error::format("checkpoint", "converter tensor set does not match its shapes"));
        }
        if model.mel_mean.len() != model.config.n_mels || model.mel_std.len() != model.config.n_mels {
            return Err(Error::format("checkpoint", "bad mel normalisation buffers"));
        }
        model.params.load_matching(params)?;
        Ok(model)
    }

    /// Model whose parameters are all `value`, for structural tests.
    pub fn filled(config: ConverterConfig, value: f64) -> Result<Self> {
        let mut m = Self::new(config)?;
        m.params.fill(value);
        Ok(m)
    }
}

/// Longest run the duration head may emit, in frames.
pub const MAX_DURATION: u32 = 100;

/// `round(exp(log_d))`, clamped to `1..=MAX_DURATION`.
pub fn durations_from_log(log_d: &[f64]) -> Vec<u32> {
    log_d
        .iter()
        .map(|&l| {
            let d = l.exp().round();
            if d >= 1.0 { d.min(MAX_DURATION as f64) as u32 } else { 1 }
        })
        .collect()
}

/// Encoder output for `inp` as a plain tensor.
pub fn condition(model: &ConverterModel, inp: &ConditioningInput) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = tape.params(&model.params);
    let h = model.encode(&mut tape, &vars, inp)?;
    Ok(tape.value(h).clone())
}

/// Per-token durations from the duration head.
pub fn predict_durations(model: &ConverterModel, hidden: &Tensor) -> Result<Vec<u32>> {
    if hidden.rows() == 0 {
        return Err(Error::InvalidInput("no tokens to time".into()));
    }
    let mut tape = Tape::new();
    let vars = tape.params(&model.params);
    let h = tape.leaf(hidden.clone());
    let ld = model.log_durations(&mut tape, &vars, h)?;
    Ok(durations_from_log(tape.value(ld).data()))
}

/// Repeat token row `t` `durations[t]` times.
pub fn length_regulate(hidden: &Tensor, durations: &[u32]) -> Result<Tensor> {
    if durations.len() != hidden.rows() {
        return Err(Error::Shape(format!("{} durations for {} tokens", durations.len(), hidden.rows())));
    }
    if durations.contains(&0) {
        return Err(Error::InvalidInput("durations must be positive".into()));
    }
    let mut tape = Tape::new();
    let h = tape.leaf(hidden.clone());
    let counts: Vec<usize> = durations.iter().map(|&d| d as usize).collect();
    let r = tape.repeat_rows(h, &counts)?;
    Ok(tape.value(r).clone())
}

/// Decoder and mel head on frame-rate states, denormalised to log-mel.
pub fn decode_mel(model: &ConverterModel, frame_hidden: &Tensor) -> Result<MelSpectrogram> {
    if frame_hidden.rows() == 0 {
        return Err(Error::InvalidInput("no frames to decode".into()));
    }
    let mut tape = Tape::new();
    let vars = tape.params(&model.params);
    let h = tape.leaf(frame_hidden.clone());
    let y = model.decode(&mut tape, &vars, h)?;
    let data = model.denormalise(tape.value(y).data());
    MelSpectrogram::from_frames(data, frame_hidden.rows(), model.mel.clone())
}

/// Units to mel. `durations` forces the given run lengths instead of the
/// duration head.
pub fn synthesize(model: &ConverterModel, inp: &ConditioningInput, durations: Option<&[u32]>) -> Result<MelSpectrogram> {
    let mut tape = Tape::new();
    let vars = tape.params(&model.params);
    let h = model.encode(&mut tape, &vars, inp)?;
    let d = match durations {
        Some(d) if d.len() != inp.units.len() => {
            return Err(Error::Shape(format!("{} durations for {} tokens", d.len(), inp.units.len())));
        }
        Some(d) => d.to_vec(),
        None => {
            let ld = model.log_durations(&mut tape, &vars, h)?;
            durations_from_log(tape.value(ld).data())
        }
    };
    let frames = model.regulate(&mut tape, &vars, h, &d)?;
    let y = model.decode(&mut tape, &vars, frames)?;
    let data = model.denormalise(tape.value(y).data());
    let n = tape.value(y).rows();
    MelSpectrogram::from_frames(data, n, model.mel.clone())
}
