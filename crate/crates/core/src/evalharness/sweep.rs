use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::emit::Report;
use super::SweepItem;
use crate::audio::MelConfig;
use crate::converter::{convert, ConverterModel};
use crate::error::{Error, Result};
use crate::metrics::spearman_srcc;
use crate::predictor::{apply_calibration, predict_raw, tile_to_min_frames, CalibrationParams, LikabilityRating, ListenerGroup, PredictorModel};
use crate::units::Codebook;

/// Calibrated predictions for one converted utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub utterance: String,
    pub target: f64,
    pub predicted: [f64; 4],
    pub mean: f64,
}

/// Per-target averages over utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub target: f64,
    pub groups: [f64; 4],
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub s: f64,
    pub targets: Vec<f64>,
    pub cells: Vec<SweepCell>,
    pub curve: Vec<CurvePoint>,
}

impl SweepReport {
    /// Spearman correlation between target and the four-group mean
    /// prediction, over every converted utterance.
    pub fn target_srcc(&self) -> Result<f64> {
        let t: Vec<f64> = self.cells.iter().map(|c| c.target).collect();
        let m: Vec<f64> = self.cells.iter().map(|c| c.mean).collect();
        spearman_srcc(&t, &m)
    }

    /// The same correlation on the per-target mean curve.
    pub fn curve_srcc(&self) -> Result<f64> {
        let t: Vec<f64> = self.curve.iter().map(|c| c.target).collect();
        let m: Vec<f64> = self.curve.iter().map(|c| c.mean).collect();
        spearman_srcc(&t, &m)
    }
}

impl Report for SweepReport {
    const KIND: &'static str = "sweep";

    fn header() -> Vec<String> {
        let mut h = vec!["utterance".to_string(), "target".to_string()];
        h.extend(ListenerGroup::ALL.iter().map(|g| g.label().to_string()));
        h.push("mean".into());
        h
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .map(|c| {
                let mut r = vec![c.utterance.clone(), c.target.to_string()];
                r.extend(c.predicted.iter().map(f64::to_string));
                r.push(c.mean.to_string());
                r
            })
            .collect()
    }
}

fn same_front_end(a: &MelConfig, b: &MelConfig) -> bool {
    (a.n_mels, a.hop, a.win, a.fft_size) == (b.n_mels, b.hop, b.win, b.fft_size) && a.f_min == b.f_min && a.f_max == b.f_max
}

/// The predictor must read the frames the converter writes.
pub fn check_compatible(converter: &ConverterModel, predictor: &PredictorModel) -> Result<()> {
    if converter.sample_rate != predictor.sample_rate || !same_front_end(&converter.mel, &predictor.mel) {
        return Err(Error::Config(format!(
            "converter front end ({} Hz, {:?}) differs from predictor ({} Hz, {:?})",
            converter.sample_rate, converter.mel, predictor.sample_rate, predictor.mel
        )));
    }
    Ok(())
}

/// Convert every item at every target (all four groups set to the target),
/// predict and calibrate.
pub fn likability_sweep(
    converter: &ConverterModel,
    predictor: &PredictorModel,
    calib: &CalibrationParams,
    codebook: &Codebook,
    items: &[SweepItem],
    targets: &[f64],
    s: f64,
) -> Result<SweepReport> {
    check_compatible(converter, predictor)?;
    if targets.is_empty() {
        return Err(Error::Config("no sweep targets".into()));
    }
    let jobs: Vec<(&SweepItem, f64)> = items.iter().flat_map(|it| targets.iter().map(move |&t| (it, t))).collect();
    let cells = jobs
        .par_iter()
        .map(|&(it, t)| {
            let mel = convert(converter, &it.features, codebook, &it.speaker, LikabilityRating::splat(t), s)?;
            // conversions shorter than the predictor's receptive field are tiled
            let y = apply_calibration(calib, &predict_raw(predictor, &tile_to_min_frames(&mel)?)?);
            Ok(SweepCell {
                utterance: it.id.clone(),
                target: t,
                predicted: y.values,
                mean: y.mean(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = targets
        .iter()
        .map(|&t| {
            let sel: Vec<&SweepCell> = cells.iter().filter(|c| c.target == t).collect();
            let n = sel.len().max(1) as f64;
            let mut groups = [0.0; 4];
            for c in &sel {
                groups.iter_mut().zip(c.predicted).for_each(|(g, v)| *g += v);
            }
            groups.iter_mut().for_each(|g| *g /= n);
            CurvePoint {
                target: t,
                groups,
                mean: sel.iter().map(|c| c.mean).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(SweepReport {
        s,
        targets: targets.to_vec(),
        cells,
        curve,
    })
}
