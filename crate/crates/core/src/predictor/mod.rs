//! Voice-likability predictor: a TDNN with statistics pooling that maps a
//! log-mel spectrogram to one rating per listener group, plus the affine
//! post-filter that matches prediction moments to human ratings.

mod annotate;
mod calibration;
mod model;
mod train;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use annotate::{annotate_corpus, annotate_streaming, Annotation, Reject, StreamSummary};
pub use calibration::{apply_calibration, fit_calibration, CalibrationParams, GroupMoments};
pub use model::{build_model, predict_raw, predict_waveform, tile_to_min_frames, PredictorModel, MIN_FRAMES};
pub use train::{calibrate_on_split, predict_split, train, EpochRecord, TrainConfig, TrainHistory};

use crate::metrics::LikeLabel;

/// Listener demographic buckets, in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ListenerGroup {
    #[serde(rename = "M_UNDER40")]
    MUnder40,
    #[serde(rename = "M_40PLUS")]
    M40Plus,
    #[serde(rename = "F_UNDER40")]
    FUnder40,
    #[serde(rename = "F_40PLUS")]
    F40Plus,
}

impl ListenerGroup {
    pub const ALL: [ListenerGroup; 4] = [
        ListenerGroup::MUnder40,
        ListenerGroup::M40Plus,
        ListenerGroup::FUnder40,
        ListenerGroup::F40Plus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Number of listeners who rated in the group.
    pub fn listener_count(self) -> u32 {
        match self {
            ListenerGroup::MUnder40 => 202,
            ListenerGroup::M40Plus => 323,
            ListenerGroup::FUnder40 => 143,
            ListenerGroup::F40Plus => 210,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ListenerGroup::MUnder40 => "M_UNDER40",
            ListenerGroup::M40Plus => "M_40PLUS",
            ListenerGroup::FUnder40 => "F_UNDER40",
            ListenerGroup::F40Plus => "F_40PLUS",
        }
    }
}

impl fmt::Display for ListenerGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One rating per listener group. Human ratings lie in [-1, 1]; predictions may not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LikabilityRating {
    pub values: [f64; 4],
}

impl LikabilityRating {
    pub fn new(values: [f64; 4]) -> Self {
        Self { values }
    }

    pub fn splat(v: f64) -> Self {
        Self { values: [v; 4] }
    }

    pub fn get(&self, g: ListenerGroup) -> f64 {
        self.values[g.index()]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / 4.0
    }

    pub fn clamped(&self) -> Self {
        Self {
            values: self.values.map(|v| v.clamp(-1.0, 1.0)),
        }
    }

    pub fn label(&self) -> LikeLabel {
        classify_liked(self.mean(), 0.0)
    }
}

impl From<[f64; 4]> for LikabilityRating {
    fn from(values: [f64; 4]) -> Self {
        Self { values }
    }
}

/// Liked iff the mean rating is at least `threshold`.
pub fn classify_liked(rating_mean: f64, threshold: f64) -> LikeLabel {
    if rating_mean >= threshold {
        LikeLabel::Liked
    } else {
        LikeLabel::Disliked
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_examples() {
        assert_eq!(LikabilityRating::splat(0.3).label(), LikeLabel::Liked);
        assert_eq!(LikabilityRating::splat(-0.3).label(), LikeLabel::Disliked);
        assert_eq!(classify_liked(0.0, 0.0), LikeLabel::Liked);
        assert_eq!(LikabilityRating::new([1.0, -1.0, 0.5, -0.5]).label(), LikeLabel::Liked);
    }

    #[test]
    fn groups_in_fixed_order() {
        let counts: Vec<u32> = ListenerGroup::ALL.iter().map(|g| g.listener_count()).collect();
        assert_eq!(counts, vec![202, 323, 143, 210]);
        assert_eq!(ListenerGroup::F40Plus.index(), 3);
        assert_eq!(serde_json::to_string(&ListenerGroup::M40Plus).unwrap(), "\"M_40PLUS\"");
    }
}
