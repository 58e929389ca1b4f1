//! Fit units on synthetic speech, tokenize one utterance and show its
//! deduplicated form next to the expanded frame sequence.
//!
//! ```text
//! cargo run --release --example units_kmeans [k]
//! ```

use voicelike::units::{
    dedup_runs, expand_runs, fit_minibatch_kmeans, inertia, kmeans_plus_plus, manifest_features, quantize,
    stack_frames, FeatureExtractor, KMeansConfig,
};
use voicelike::synth::{synth_corpus, SynthConfig};

fn main() -> voicelike::Result<()> {
    let k = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(32);
    let dir = tempfile::tempdir().expect("temp dir");
    let synth = SynthConfig { n_speakers: 3, clips_per_speaker: 8, split: [24, 0, 0], ..SynthConfig::default() };
    let manifest = synth_corpus(&synth, dir.path())?;
    let feats = manifest_features(&manifest, None, &FeatureExtractor::default(), synth.sample_rate)?;
    let seqs: Vec<_> = feats.iter().map(|(_, f)| f.clone()).collect();
    let (frames, dim) = stack_frames(&seqs)?;

    let cfg = KMeansConfig { k, ..KMeansConfig::default() };
    let seeded = kmeans_plus_plus(&frames, dim, &cfg)?;
    let fitted = fit_minibatch_kmeans(&frames, dim, &cfg)?;
    println!(
        "{} frames of dim {dim}; inertia after seeding {:.1}, after mini-batch k-means {:.1}",
        frames.len() / dim,
        inertia(&seeded, &frames, dim)?,
        inertia(&fitted, &frames, dim)?
    );

    let (id, f) = &feats[0];
    let units = quantize(&fitted, f)?;
    let deduped = dedup_runs(&units);
    println!("{id}: {} frames -> {} units", units.len(), deduped.len());
    println!("  ids  {:?}", &deduped.ids[..deduped.len().min(12)]);
    println!("  runs {:?}", &deduped.run_lengths.as_deref().unwrap_or_default()[..deduped.len().min(12)]);
    assert_eq!(expand_runs(&deduped)?.ids, units.ids);
    Ok(())
}
