use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LikabilityRating;
use crate::audio::{log_mel_spectrogram, MelConfig, MelSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::tensorkit::{load_checkpoint, save_checkpoint, ContextSpec, ParamSet, Tape, Tensor, Var};

/// Shortest input the frame layers accept.
pub const MIN_FRAMES: usize = 17;

const WIDTH: usize = 32;
const N_MELS: usize = 80;
const N_OUT: usize = 4;

/// `(name, rows, cols, context offsets)` for each trainable layer.
const LAYERS: [(&str, usize, usize, &[isize]); 5] = [
    ("frame1", 3 * N_MELS, WIDTH, &[-2, 0, 2]),
    ("frame2", 5 * WIDTH, WIDTH, &[-6, -3, 0, 3, 6]),
    ("frame3", WIDTH, WIDTH, &[0]),
    ("segment4", 2 * WIDTH, WIDTH, &[0]),
    ("segment5", WIDTH, N_OUT, &[0]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub params: ParamSet,
    pub mel: MelConfig,
    pub sample_rate: u32,
    /// Per-bin input normalisation, fitted on training mels.
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
}

/// Fresh model with Kaiming-uniform weights and zero biases.
pub fn build_model(seed: u64) -> PredictorModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    for (name, rows, cols, _) in LAYERS {
        params.push(format!("{name}.weight"), Tensor::kaiming_uniform(&[rows, cols], rows, &mut rng));
        params.push(format!("{name}.bias"), Tensor::zeros(&[cols]));
    }
    PredictorModel {
        params,
        mel: MelConfig::default(),
        sample_rate: crate::audio::DEFAULT_SAMPLE_RATE,
        input_mean: vec![0.0; N_MELS],
        input_std: vec![1.0; N_MELS],
    }
}

impl PredictorModel {
    /// Record the forward pass for a normalised `T x 80` input. `vars` are
    /// the parameter leaves in `self.params` order.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let ctx = |i: usize| ContextSpec::new(LAYERS[i].3.to_vec()).expect("static contexts are valid");
        let mut h = x;
        for i in 0..3 {
            h = tape.tdnn(h, &ctx(i), vars[2 * i], vars[2 * i + 1])?;
            h = tape.relu(h);
        }
        let pooled = tape.stats_pool(h)?;
        let s4 = tape.dense(pooled, vars[6], Some(vars[7]))?;
        let s4 = tape.relu(s4);
        tape.dense(s4, vars[8], Some(vars[9]))
    }

    /// Mel frames normalised with the stored input statistics.
    pub fn normalise(&self, mel: &MelSpectrogram) -> Result<Tensor> {
        if mel.n_mels() != N_MELS {
            return Err(Error::Shape(format!("predictor expects {N_MELS} mel bins, got {}", mel.n_mels())));
        }
        if mel.n_frames() < MIN_FRAMES {
            return Err(Error::InvalidInput(format!(
                "predictor needs at least {MIN_FRAMES} frames, got {}",
                mel.n_frames()
            )));
        }
        let data = mel
            .data()
            .chunks(N_MELS)
            .flat_map(|row| {
                row.iter()
                    .zip(self.input_mean.iter().zip(&self.input_std))
                    .map(|(v, (m, s))| (v - m) / s)
            })
            .collect();
        Tensor::matrix(mel.n_frames(), N_MELS, data)
    }

    /// Write parameters, normalisation buffers and the mel settings. The log
    /// floor is not stored; loading restores the default.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mean = Tensor::row(self.input_mean.clone());
        let std = Tensor::row(self.input_std.clone());
        let cfg = Tensor::row(self.mel.to_row(self.sample_rate));
        let extra = [("input_norm.mean", &mean), ("input_norm.std", &std), ("mel.config", &cfg)];
        save_checkpoint(path, self.params.iter().chain(extra))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut model = build_model(0);
        let mut named = load_checkpoint(path)?;
        let mut take = |name: &str| -> Result<Vec<f64>> {
            let i = named
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::format("checkpoint", format!("missing tensor {name}")))?;
            Ok(named.remove(i).1.into_data())
        };
        let mean = take("input_norm.mean")?;
        let std = take("input_norm.std")?;
        let cfg = take("mel.config")?;
        if mean.len() != N_MELS || std.len() != N_MELS || cfg.len() != 7 {
            return Err(Error::format("checkpoint", "bad predictor buffers"));
        }
        if std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::format("checkpoint", "non-positive input std"));
        }
        let expected = model.params.len();
        if named.len() != expected {
            return Err(Error::format(
                "checkpoint",
                format!("expected {expected} parameter tensors, found {}", named.len()),
            ));
        }
        model.params.load_matching(named)?;
        model.input_mean = mean;
        model.input_std = std;
        (model.sample_rate, model.mel) = MelConfig::from_row(&cfg)?;
        if model.mel.n_mels != N_MELS {
            return Err(Error::format("checkpoint", "predictor expects 80 mel bins"));
        }
        Ok(model)
    }
}

/// Four raw (uncalibrated) group ratings for one utterance.
pub fn predict_raw(model: &PredictorModel, mel: &MelSpectrogram) -> Result<LikabilityRating> {
    let x = model.normalise(mel)?;
    let mut tape = Tape::new();
    let vars = tape.params(&model.params);
    let xv = tape.leaf(x);
    let y = model.forward(&mut tape, &vars, xv)?;
    let out = tape.value(y).data();
    Ok(LikabilityRating::new([out[0], out[1], out[2], out[3]]))
}

/// Repeat the frames of `mel` cyclically until it has at least
/// [`MIN_FRAMES`]. Longer inputs come back unchanged. Tiling leaves the
/// per-bin frame statistics close to those of the original.
pub fn tile_to_min_frames(mel: &MelSpectrogram) -> Result<MelSpectrogram> {
    let t = mel.n_frames();
    if t >= MIN_FRAMES {
        return Ok(mel.clone());
    }
    if t == 0 {
        return Err(Error::InvalidInput("cannot tile an empty mel spectrogram".into()));
    }
    let n = mel.n_mels();
    let data = (0..MIN_FRAMES).flat_map(|i| mel.frame(i % t).iter().copied()).collect::<Vec<_>>();
    debug_assert_eq!(data.len(), MIN_FRAMES * n);
    MelSpectrogram::from_frames(data, MIN_FRAMES, mel.config().clone())
}

/// Mel front end followed by [`predict_raw`]. The waveform must already be
/// mono at the model's sample rate.
pub fn predict_waveform(model: &PredictorModel, w: &Waveform) -> Result<LikabilityRating> {
    if w.sample_rate() != model.sample_rate {
        return Err(Error::InvalidInput(format!(
            "waveform at {} Hz, model expects {} Hz",
            w.sample_rate(),
            model.sample_rate
        )));
    }
    predict_raw(model, &log_mel_spectrogram(w, &model.mel)?)
}
