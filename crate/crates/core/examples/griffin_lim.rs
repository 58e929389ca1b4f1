//! Resynthesize a synthetic clip from its log-mel spectrogram with
//! Griffin-Lim and compare the mel spectra of source and reconstruction.
//!
//! ```text
//! cargo run --release --example griffin_lim [iterations] [out.wav]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voicelike::audio::{log_mel_spectrogram, write_wav_pcm16, MelConfig};
use voicelike::converter::griffin_lim_vocoder;
use voicelike::synth::{speaker_profiles, synth_clip, SynthConfig};

fn main() -> voicelike::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let iterations = args.first().and_then(|a| a.parse().ok()).unwrap_or(60);
    let synth = SynthConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spk = &speaker_profiles(&synth, &mut rng)[1];
    let wave = synth_clip(spk, -0.5, &synth, &mut rng).wave;
    let cfg = MelConfig::default();
    let mel = log_mel_spectrogram(&wave, &cfg)?;

    let t0 = std::time::Instant::now();
    let rec = griffin_lim_vocoder(&mel, synth.sample_rate, iterations)?;
    let mel2 = log_mel_spectrogram(&rec, &cfg)?;
    let n = mel.n_frames().min(mel2.n_frames());
    let err: f64 = (0..n)
        .flat_map(|t| mel.frame(t).iter().zip(mel2.frame(t)).map(|(a, b)| (a - b).abs()))
        .sum::<f64>()
        / (n * cfg.n_mels) as f64;
    println!(
        "{iterations} iterations in {:.1?}: {} samples, mean |log-mel difference| {err:.3}",
        t0.elapsed(),
        rec.len()
    );
    if let Some(path) = args.get(1) {
        write_wav_pcm16(path, &rec)?;
        println!("wrote {path}");
    }
    Ok(())
}
