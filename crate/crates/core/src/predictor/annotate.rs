use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibration::{apply_calibration, CalibrationParams};
use super::model::{predict_waveform, PredictorModel};
use crate::audio::load_mono;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifest::{rebase_record, Manifest, ManifestReader, ManifestRecord};

/// A record that could not be annotated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub manifest: Manifest,
    pub rejects: Vec<Reject>,
}

fn annotate_one(model: &PredictorModel, calib: &CalibrationParams, manifest: &Manifest, r: &ManifestRecord) -> Result<ManifestRecord> {
    let w = load_mono(manifest.resolve(&r.audio), model.sample_rate)?;
    let pred = apply_calibration(calib, &predict_waveform(model, &w)?).values;
    let mut out = r.clone();
    if let Some(orig) = r.ratings {
        out.ratings_orig = Some(orig);
    }
    out.ratings_pred = Some(pred);
    out.ratings = Some(pred);
    Ok(out)
}

/// Predict calibrated ratings for every record, in input order.
///
/// Records whose audio cannot be read or is too short are left out of the
/// output and listed in `rejects`.
pub fn annotate_corpus(model: &PredictorModel, calib: &CalibrationParams, manifest: &Manifest) -> Annotation {
    let results: Vec<_> = manifest
        .records
        .par_iter()
        .map(|r| annotate_one(model, calib, manifest, r))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut rejects = Vec::new();
    for (r, res) in manifest.records.iter().zip(results) {
        match res {
            Ok(a) => records.push(a),
            Err(e) => {
                log::warn!("rejecting {}: {e}", r.id);
                rejects.push(Reject {
                    id: r.id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    Annotation {
        manifest: Manifest::new(records, manifest.base_dir.clone()),
        rejects,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StreamSummary {
    pub annotated: usize,
    pub rejected: usize,
}

/// [`annotate_corpus`] over a manifest file, `chunk` records at a time.
///
/// Annotated records go to `out` with paths rebased to its directory;
/// rejects go to `rejects` as JSON Lines of `{id, reason}`. Memory does not
/// grow with the corpus.
pub fn annotate_streaming(
    model: &PredictorModel,
    calib: &CalibrationParams,
    manifest: &Path,
    out: &Path,
    rejects: &Path,
    chunk: usize,
) -> Result<StreamSummary> {
    if chunk == 0 {
        return Err(Error::Config("annotation chunk size must be positive".into()));
    }
    let mut reader = ManifestReader::open(manifest)?;
    let base = reader.base_dir().to_path_buf();
    let out_dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let create = |p: &Path| std::fs::File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
    let (mut w_out, mut w_rej) = (create(out)?, create(rejects)?);
    let mut summary = StreamSummary::default();
    loop {
        let batch = reader.by_ref().take(chunk).collect::<Result<Vec<_>>>()?;
        if batch.is_empty() {
            break;
        }
        let ann = annotate_corpus(model, calib, &Manifest::new(batch, &base));
        for mut r in ann.manifest.records {
            rebase_record(&mut r, &base, &out_dir);
            serde_json::to_writer(&mut w_out, &r)?;
            w_out.write_all(b"\n").map_err(|e| Error::io(out, e))?;
            summary.annotated += 1;
        }
        for r in ann.rejects {
            serde_json::to_writer(&mut w_rej, &r)?;
            w_rej.write_all(b"\n").map_err(|e| Error::io(rejects, e))?;
            summary.rejected += 1;
        }
    }
    w_out.flush().map_err(|e| Error::io(out, e))?;
    w_rej.flush().map_err(|e| Error::io(rejects, e))?;
    Ok(summary)
}
