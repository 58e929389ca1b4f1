//! Apply the training augmentation chain to a synthetic clip several times
//! and show which transforms each draw picked.
//!
//! ```text
//! cargo run --release --example augmentation [draws]
//! ```

use voicelike::augment::{AugmentConfig, AugmentPlan, ImpulseResponse};
use voicelike::synth::{speaker_profiles, synth_clip, synth_impulse_response, SynthConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> voicelike::Result<()> {
    let draws = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(6);
    let synth = SynthConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spk = &speaker_profiles(&synth, &mut rng)[0];
    let clip = synth_clip(spk, 0.3, &synth, &mut rng).wave;
    let irs: Vec<_> = (0..3)
        .map(|_| ImpulseResponse::new(synth_impulse_response(0.2, synth.sample_rate, &mut rng), synth.sample_rate))
        .collect::<voicelike::Result<_>>()?;

    let cfg = AugmentConfig::default();
    println!("source: {} samples, power {:.4}", clip.len(), clip.power());
    for seed in 0..draws {
        let plan = AugmentPlan::sample(&cfg, irs.len(), synth.sample_rate, seed);
        let out = plan.apply(&clip, &irs)?;
        println!(
            "seed {seed}: pad {:?}, reverb {:?}, noise {}, reverse {} -> {} samples, power {:.4}",
            plan.pad,
            plan.reverb,
            plan.noise.map_or("off".to_string(), |(snr, _)| format!("{snr:.1} dB")),
            plan.reverse,
            out.len(),
            out.power()
        );
    }
    Ok(())
}
