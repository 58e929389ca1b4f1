use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::emit::Report;
use super::SweepItem;
use crate::audio::MelSpectrogram;
use crate::converter::{convert, ConverterModel};
use crate::error::{Error, Result};
use crate::metrics::token_error_rate;
use crate::predictor::LikabilityRating;
use crate::units::{dedup_runs, quantize, Codebook, FeatureExtractor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentCell {
    pub utterance: String,
    pub target: f64,
    pub cer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentPoint {
    pub target: f64,
    pub mean_cer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentReport {
    pub s: f64,
    pub cells: Vec<ContentCell>,
    pub per_target: Vec<ContentPoint>,
}

impl Report for ContentReport {
    const KIND: &'static str = "content";

    fn header() -> Vec<String> {
        ["utterance", "target", "unit_cer"].map(String::from).to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .map(|c| vec![c.utterance.clone(), c.target.to_string(), c.cer.to_string()])
            .collect()
    }
}

/// Error rate between `source_ids` (deduplicated) and the deduplicated units
/// of `mel` re-quantized through the internal feature path.
pub fn unit_cer(source_ids: &[u32], mel: &MelSpectrogram, codebook: &Codebook) -> Result<f64> {
    if codebook.dim() != mel.n_mels() {
        return Err(Error::Config(format!(
            "content proxy needs a codebook over {}-bin mel features, got {} dims",
            mel.n_mels(),
            codebook.dim()
        )));
    }
    let hyp = dedup_runs(&quantize(codebook, &FeatureExtractor::from_mel(mel)?)?);
    token_error_rate(source_ids, &hyp.ids)
}

/// Convert each item at each target and score unit-string stability.
pub fn content_proxy_eval(
    converter: &ConverterModel,
    codebook: &Codebook,
    items: &[SweepItem],
    targets: &[f64],
    s: f64,
) -> Result<ContentReport> {
    let jobs: Vec<(&SweepItem, f64)> = items.iter().flat_map(|it| targets.iter().map(move |&t| (it, t))).collect();
    let cells = jobs
        .par_iter()
        .map(|&(it, t)| {
            let src = dedup_runs(&quantize(codebook, &it.features)?);
            let mel = convert(converter, &it.features, codebook, &it.speaker, LikabilityRating::splat(t), s)?;
            Ok(ContentCell {
                utterance: it.id.clone(),
                target: t,
                cer: unit_cer(&src.ids, &mel, codebook)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let per_target = targets
        .iter()
        .map(|&t| {
            let v: Vec<f64> = cells.iter().filter(|c| c.target == t).map(|c| c.cer).collect();
            ContentPoint {
                target: t,
                mean_cer: v.iter().sum::<f64>() / v.len().max(1) as f64,
            }
        })
        .collect();
    Ok(ContentReport { s, cells, per_target })
}
