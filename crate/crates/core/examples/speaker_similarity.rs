//! Speaker-similarity scoring on planted Gaussian speaker clusters: EER of
//! the references, the derived threshold and the pass rate of noisy
//! "conversions" drawn around each speaker.
//!
//! ```text
//! cargo run --release --example speaker_similarity [speakers] [noise]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use voicelike::evalharness::{speaker_similarity_eval, ConvertedEmbedding, LabeledEmbedding};
use voicelike::speaker::SpeakerEmbedding;

fn main() -> voicelike::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_speakers = args.first().and_then(|a| a.parse().ok()).unwrap_or(6);
    let noise = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(0.3);
    let dim = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let unit = Normal::new(0.0, 1.0).expect("valid std");
    let jitter = Normal::new(0.0, noise).expect("valid std");
    let centres: Vec<Vec<f64>> = (0..n_speakers).map(|_| (0..dim).map(|_| unit.sample(&mut rng)).collect()).collect();
    let mut draw = |c: &[f64]| SpeakerEmbedding::new(c.iter().map(|v| v + jitter.sample(&mut rng)).collect());

    let mut refs = Vec::new();
    let mut conversions = Vec::new();
    for (s, c) in centres.iter().enumerate() {
        for i in 0..10 {
            refs.push(LabeledEmbedding { id: format!("s{s}_{i}"), speaker: format!("s{s}"), embedding: draw(c)? });
        }
        for t in [-2.0, 0.0, 2.0] {
            conversions.push(ConvertedEmbedding {
                utterance: format!("s{s}_conv"),
                speaker: format!("s{s}"),
                target: t,
                embedding: draw(c)?,
            });
        }
    }
    let report = speaker_similarity_eval(&refs, &conversions)?;
    println!(
        "EER {:.4} at threshold {:.3}; fixed reference threshold {}",
        report.eer.eer, report.eer.threshold, report.reference_threshold
    );
    println!("{} of {} conversions pass", report.cells.iter().filter(|c| c.pass).count(), report.cells.len());
    Ok(())
}
