use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::emit::Report;
use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::metrics::{compute_eer, cosine_similarity, EerResult};
use crate::speaker::{EmbeddingProvider, SpeakerEmbedding};

/// Verification threshold used with the external speaker-verification
/// model in the original study, shown for comparison only.
pub const REFERENCE_THRESHOLD: f64 = 0.48;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding {
    pub id: String,
    pub speaker: String,
    pub embedding: SpeakerEmbedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertedEmbedding {
    pub utterance: String,
    pub speaker: String,
    pub target: f64,
    pub embedding: SpeakerEmbedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCell {
    pub utterance: String,
    pub speaker: String,
    pub target: f64,
    pub similarity: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub eer: EerResult,
    pub reference_threshold: f64,
    pub cells: Vec<SimilarityCell>,
}

impl SimilarityReport {
    pub fn pass_rate(&self) -> f64 {
        self.cells.iter().filter(|c| c.pass).count() as f64 / self.cells.len().max(1) as f64
    }
}

impl Report for SimilarityReport {
    const KIND: &'static str = "similarity";

    fn header() -> Vec<String> {
        ["utterance", "speaker", "target", "similarity", "pass", "eer_threshold", "reference_threshold"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .map(|c| {
                vec![
                    c.utterance.clone(),
                    c.speaker.clone(),
                    c.target.to_string(),
                    c.similarity.to_string(),
                    c.pass.to_string(),
                    self.eer.threshold.to_string(),
                    self.reference_threshold.to_string(),
                ]
            })
            .collect()
    }
}

/// Cosine scores of every unordered pair of references, split into
/// same-speaker (genuine) and different-speaker (impostor) trials.
pub fn reference_trials(refs: &[LabeledEmbedding]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
    for (i, a) in refs.iter().enumerate() {
        for b in &refs[i + 1..] {
            let s = cosine_similarity(a.embedding.values(), b.embedding.values())?;
            if a.speaker == b.speaker {
                genuine.push(s);
            } else {
                impostor.push(s);
            }
        }
    }
    Ok((genuine, impostor))
}

/// Score each conversion against the centroid of its speaker's references,
/// with the pass threshold taken from the references' own EER point.
pub fn speaker_similarity_eval(refs: &[LabeledEmbedding], conversions: &[ConvertedEmbedding]) -> Result<SimilarityReport> {
    let (genuine, impostor) = reference_trials(refs)?;
    let eer = compute_eer(&genuine, &impostor)?;
    let mut by_speaker: BTreeMap<&str, Vec<SpeakerEmbedding>> = BTreeMap::new();
    for r in refs {
        by_speaker.entry(&r.speaker).or_default().push(r.embedding.clone());
    }
    let centroids = by_speaker
        .into_iter()
        .map(|(k, v)| Ok((k, SpeakerEmbedding::centroid(&v)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let cells = conversions
        .iter()
        .map(|c| {
            let centre = centroids
                .get(c.speaker.as_str())
                .ok_or_else(|| Error::Data(format!("no reference embeddings for speaker {}", c.speaker)))?;
            let similarity = cosine_similarity(c.embedding.values(), centre.values())?;
            Ok(SimilarityCell {
                utterance: c.utterance.clone(),
                speaker: c.speaker.clone(),
                target: c.target,
                similarity,
                pass: similarity >= eer.threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityReport {
        eer,
        reference_threshold: REFERENCE_THRESHOLD,
        cells,
    })
}

/// Embed converted mels with `provider`. Each entry is
/// `(utterance, speaker, target, mel)`.
pub fn embed_conversions(
    provider: &dyn EmbeddingProvider,
    mels: &[(String, String, f64, MelSpectrogram)],
) -> Result<Vec<ConvertedEmbedding>> {
    mels.par_iter()
        .map(|(u, s, t, m)| {
            Ok(ConvertedEmbedding {
                utterance: u.clone(),
                speaker: s.clone(),
                target: *t,
                embedding: provider.embed(m)?,
            })
        })
        .collect()
}
