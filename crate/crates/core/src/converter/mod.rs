//! Likability-conditioned unit-to-mel converter.
//!
//! Deduplicated unit tokens are embedded, the speaker projection and the
//! `s`-scaled rating projection are added to every token, and residual 1-D
//! convolution blocks encode the sequence. A duration head predicts how many
//! frames each token spans; the length regulator repeats token states and a
//! decoder maps them to log-mel frames.

mod model;
mod train;
mod vocoder;

pub use model::{
    condition, decode_mel, durations_from_log, length_regulate, MAX_DURATION, predict_durations, run_position_features, synthesize,
    Conditioning,
    ConditioningInput, ConverterConfig, ConverterModel,
};
pub use train::{
    example_loss, fit_stats, prepare_examples, reconstruct, rescale_runs, train_converter, train_on_examples,
    ConverterExample, ConverterHistory, ConverterTrainConfig, FitStats, StepRecord, TRAIN_SCALE,
};
pub use vocoder::{griffin_lim_vocoder, mel_to_magnitude, DEFAULT_GL_ITERATIONS};

use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::predictor::LikabilityRating;
use crate::speaker::SpeakerEmbedding;
use crate::units::{dedup_runs, quantize, Codebook, FeatureSequence, FeatureSource};

/// Rating-embedding gain used at inference unless overridden.
pub const DEFAULT_CONVERT_SCALE: f64 = 2.5;

/// Quantize, deduplicate, condition on `speaker` and `target` with gain `s`,
/// predict durations and decode.
pub fn convert(
    model: &ConverterModel,
    feats: &FeatureSequence,
    codebook: &Codebook,
    speaker: &SpeakerEmbedding,
    target: LikabilityRating,
    s: f64,
) -> Result<MelSpectrogram> {
    if codebook.k() != model.config.vocab {
        return Err(Error::Config(format!(
            "codebook has {} units, converter vocabulary is {}",
            codebook.k(),
            model.config.vocab
        )));
    }
    let units = dedup_runs(&quantize(codebook, feats)?);
    let inp = ConditioningInput {
        units: crate::units::UnitSequence::new(units.ids),
        speaker: speaker.clone(),
        target,
        s,
    };
    synthesize(model, &inp, None)
}

/// A mel spectrogram as an LKBF feature matrix.
pub fn mel_to_features(mel: &MelSpectrogram) -> Result<FeatureSequence> {
    let data = mel.data().iter().map(|&v| v as f32).collect();
    FeatureSequence::with_source(data, mel.n_mels(), FeatureSource::InternalMel)
}
