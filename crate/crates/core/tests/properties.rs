//! Cross-module properties: quantisation feeding deduplication, binary
//! formats, and calibration feeding the rank metrics.

use proptest::collection::vec;
use proptest::prelude::*;

use voicelike::metrics::{kendall_tau, spearman_srcc};
use voicelike::predictor::{apply_calibration, fit_calibration, LikabilityRating};
use voicelike::speaker::{decode_embedding, encode_embedding, SpeakerEmbedding};
use voicelike::units::{
    decode_codebook, decode_features, dedup_runs, encode_codebook, encode_features, expand_runs, quantize, Codebook,
    FeatureSequence, UnitRecord,
};

fn codebook(rows: usize, dim: usize) -> impl Strategy<Value = Codebook> {
    vec(vec(-4.0f32..4.0, dim), rows).prop_filter_map("distinct rows", |r| Codebook::from_rows(&r).ok())
}

proptest! {
    #[test]
    fn quantised_units_survive_dedup(cb in codebook(5, 3), frames in vec(-4.0f32..4.0, 3..90)) {
        let frames = &frames[..frames.len() / 3 * 3];
        let feats = FeatureSequence::new(frames.to_vec(), 3).unwrap();
        let units = quantize(&cb, &feats).unwrap();
        prop_assert_eq!(units.len(), frames.len() / 3);
        prop_assert!(units.ids.iter().all(|&u| (u as usize) < cb.k()));
        let d = dedup_runs(&units);
        prop_assert_eq!(d.expanded_len(), units.len());
        prop_assert_eq!(&expand_runs(&d).unwrap().ids, &units.ids);
        let record = UnitRecord::new("x", &units);
        prop_assert_eq!(record.sequence().unwrap(), d);
    }

    #[test]
    fn binary_formats_round_trip(
        cb in codebook(4, 2),
        data in vec(-100.0f32..100.0, 0..64),
        emb in vec(prop_oneof![-3.0f64..-0.01, 0.01f64..3.0], 1..32),
    ) {
        let back = decode_codebook(&encode_codebook(&cb)).unwrap();
        prop_assert_eq!(back.centroids(), cb.centroids());
        prop_assert_eq!(back.k(), cb.k());

        let data = &data[..data.len() / 4 * 4];
        let f = FeatureSequence::new(data.to_vec(), 4).unwrap();
        let decoded = decode_features(&encode_features(&f)).unwrap();
        prop_assert_eq!(decoded.data(), f.data());

        let e = SpeakerEmbedding::new(emb).unwrap();
        // embeddings are stored as f32
        let stored: Vec<f64> = e.values().iter().map(|&v| v as f32 as f64).collect();
        let back = decode_embedding(&encode_embedding(&e)).unwrap();
        prop_assert_eq!(back.values(), &stored[..]);
    }

    #[test]
    fn truncated_formats_are_rejected(cb in codebook(3, 2), cut in 1usize..8) {
        let bytes = encode_codebook(&cb);
        prop_assert!(decode_codebook(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn calibration_keeps_rank_metrics(
        rows in vec((vec(-2i32..3, 4), vec(-3.0f64..3.0, 4)), 3..40),
    ) {
        let preds: Vec<LikabilityRating> =
            rows.iter().map(|(p, _)| LikabilityRating::new([p[0] as f64 * 0.5, p[1] as f64, p[2] as f64 * 0.25, p[3] as f64])).collect();
        let truth: Vec<LikabilityRating> = rows.iter().map(|(_, t)| LikabilityRating::new([t[0], t[1], t[2], t[3]])).collect();
        let Ok(params) = fit_calibration(&preds, &truth) else {
            // a constant prediction column has no scale to calibrate
            return Ok(());
        };
        let cal: Vec<LikabilityRating> = preds.iter().map(|p| apply_calibration(&params, p)).collect();
        for g in 0..4 {
            let col = |rs: &[LikabilityRating]| rs.iter().map(|r| r.values[g]).collect::<Vec<_>>();
            let (p, c, t) = (col(&preds), col(&cal), col(&truth));
            for f in [spearman_srcc, kendall_tau] {
                match (f(&p, &t), f(&c, &t)) {
                    (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                    (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
                }
            }
        }
    }
}
