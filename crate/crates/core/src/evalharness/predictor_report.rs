use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::emit::Report;
use crate::audio::load_mono;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, Split};
use crate::metrics::{accuracy_f1, kendall_tau, mse, pearson_lcc, spearman_srcc, std_dev, LikeLabel};
use crate::predictor::{apply_calibration, predict_waveform, CalibrationParams, LikabilityRating, ListenerGroup, PredictorModel};

/// One row of the metric table. Correlations are `None` when undefined
/// (constant predictions or targets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub group: String,
    pub mse: f64,
    pub std: f64,
    pub lcc: Option<f64>,
    pub srcc: Option<f64>,
    pub ktau: Option<f64>,
    pub gt_std: f64,
}

impl MetricRow {
    fn compute(group: &str, p: &[f64], t: &[f64]) -> Result<Self> {
        Ok(Self {
            group: group.to_string(),
            mse: mse(p, t)?,
            std: std_dev(p),
            lcc: pearson_lcc(p, t).ok(),
            srcc: spearman_srcc(p, t).ok(),
            ktau: kendall_tau(p, t).ok(),
            gt_std: std_dev(t),
        })
    }
}

/// Per-group rows, an `All` row on the four-group means, and liked/disliked
/// accuracy and F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub n: usize,
    pub rows: Vec<MetricRow>,
    pub accuracy: f64,
    pub f1: f64,
}

impl Report for PredictorReport {
    const KIND: &'static str = "predictor";

    fn header() -> Vec<String> {
        ["group", "MSE", "Std", "LCC", "SRCC", "KTAU", "GT Std", "accuracy", "F1"]
            .map(String::from)
            .to_vec()
    }

    /// Accuracy and F1 are filled on the last row only.
    fn rows(&self) -> Vec<Vec<String>> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let last = self.rows.len().saturating_sub(1);
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut out = vec![
                    r.group.clone(),
                    r.mse.to_string(),
                    r.std.to_string(),
                    opt(r.lcc),
                    opt(r.srcc),
                    opt(r.ktau),
                    r.gt_std.to_string(),
                ];
                if i == last {
                    out.extend([self.accuracy.to_string(), self.f1.to_string()]);
                } else {
                    out.extend([String::new(), String::new()]);
                }
                out
            })
            .collect()
    }
}

pub fn predictor_report_from(preds: &[LikabilityRating], targets: &[LikabilityRating]) -> Result<PredictorReport> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mut rows = Vec::with_capacity(5);
    for g in ListenerGroup::ALL {
        let p: Vec<f64> = preds.iter().map(|r| r.get(g)).collect();
        let t: Vec<f64> = targets.iter().map(|r| r.get(g)).collect();
        rows.push(MetricRow::compute(g.label(), &p, &t)?);
    }
    let p: Vec<f64> = preds.iter().map(LikabilityRating::mean).collect();
    let t: Vec<f64> = targets.iter().map(LikabilityRating::mean).collect();
    rows.push(MetricRow::compute("All", &p, &t)?);
    let pl: Vec<LikeLabel> = preds.iter().map(LikabilityRating::label).collect();
    let tl: Vec<LikeLabel> = targets.iter().map(LikabilityRating::label).collect();
    let (accuracy, f1) = accuracy_f1(&pl, &tl, LikeLabel::Liked)?;
    Ok(PredictorReport {
        n: preds.len(),
        rows,
        accuracy,
        f1,
    })
}

/// Predict and calibrate every record of `split`, then tabulate against the
/// ground-truth ratings (`ratings_orig` when the manifest was annotated).
pub fn predictor_report(
    model: &PredictorModel,
    calib: &CalibrationParams,
    manifest: &Manifest,
    split: Split,
) -> Result<PredictorReport> {
    let recs: Vec<_> = manifest.split(split).collect();
    let pairs = recs
        .par_iter()
        .map(|r| {
            let truth = r
                .ratings_orig
                .or(r.ratings)
                .ok_or_else(|| Error::Data(format!("record {} has no ground-truth ratings", r.id)))?;
            let w = load_mono(manifest.resolve(&r.audio), model.sample_rate)?;
            let y = apply_calibration(calib, &predict_waveform(model, &w)?);
            Ok((y, LikabilityRating::new(truth)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (p, t): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    predictor_report_from(&p, &t)
}
