//! Objective evaluations: likability sweeps over target ratings, a unit-level
//! content proxy, speaker similarity against reference embeddings and
//! predictor metric tables, plus CSV/JSON report output.

mod content;
mod emit;
mod predictor_report;
mod similarity;
mod sweep;

pub use content::{content_proxy_eval, unit_cer, ContentCell, ContentPoint, ContentReport};
pub use emit::{emit_report, read_json_report, report_file_name, Report, ReportFormat, ReportMeta, REPORT_VERSION};
pub use predictor_report::{predictor_report, predictor_report_from, MetricRow, PredictorReport};
pub use similarity::{
    embed_conversions, reference_trials, speaker_similarity_eval, ConvertedEmbedding, LabeledEmbedding,
    SimilarityCell, SimilarityReport, REFERENCE_THRESHOLD,
};
pub use sweep::{check_compatible, likability_sweep, CurvePoint, SweepCell, SweepReport};

use rayon::prelude::*;

use crate::audio::{load_mono, log_mel_spectrogram, MelSpectrogram};
use crate::converter::ConverterModel;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, Split};
use crate::speaker::{load_embedding, SpeakerEmbedding};
use crate::units::{load_features, Codebook, FeatureExtractor, FeatureSequence};

/// Evenly spaced targets from `lo` to `hi` inclusive.
pub fn target_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!("bad target grid {lo}..{hi} step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

/// -2 to 2 in steps of 0.5.
pub fn default_targets() -> Vec<f64> {
    target_grid(-2.0, 2.0, 0.5).expect("valid grid")
}

/// One source utterance prepared for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepItem {
    pub id: String,
    pub speaker_name: String,
    /// Features in the codebook's space.
    pub features: FeatureSequence,
    pub speaker: SpeakerEmbedding,
    /// Log-mel of the source audio.
    pub mel: MelSpectrogram,
}

/// Load features, speaker embeddings and source mels for the records of one
/// split (or all records).
pub fn load_sweep_items(
    manifest: &Manifest,
    split: Option<Split>,
    codebook: &Codebook,
    converter: &ConverterModel,
) -> Result<Vec<SweepItem>> {
    let recs: Vec<_> = manifest.records.iter().filter(|r| split.is_none_or(|s| r.split == s)).collect();
    recs.par_iter()
        .map(|r| {
            let emb = r
                .embedding
                .as_ref()
                .ok_or_else(|| Error::Data(format!("record {} has no speaker embedding", r.id)))?;
            let wave = load_mono(manifest.resolve(&r.audio), converter.sample_rate)?;
            let mel = log_mel_spectrogram(&wave, &converter.mel)?;
            let features = match &r.features {
                Some(p) => load_features(manifest.resolve(p))?,
                None => FeatureExtractor::from_mel(&mel)?,
            };
            if features.dim() != codebook.dim() {
                return Err(Error::Data(format!("record {}: features do not match the codebook", r.id)));
            }
            Ok(SweepItem {
                id: r.id.clone(),
                speaker_name: r.speaker.clone(),
                features,
                speaker: load_embedding(manifest.resolve(emb))?,
                mel,
            })
        })
        .collect()
}
