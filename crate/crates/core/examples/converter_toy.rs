//! Overfit the unit-to-mel converter on a 20-utterance synthetic set and
//! report teacher-forced mel error and duration error.
//!
//! ```text
//! cargo run --release --example converter_toy [steps] [embed_dim] [lr] [decoder_blocks] [kernel] [batch]
//! ```

use voicelike::converter::{fit_stats, prepare_examples, train_on_examples, ConverterConfig, ConverterModel, ConverterTrainConfig};
use voicelike::synth::{synth_corpus, SynthConfig};
use voicelike::units::{fit_minibatch_kmeans, FeatureExtractor, KMeansConfig};

fn main() -> voicelike::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize| args.get(i).and_then(|a| a.parse::<f64>().ok());
    let steps = arg(0).map_or(12000, |v| v as usize);
    let embed_dim = arg(1).map_or(64, |v| v as usize);
    let lr = arg(2).unwrap_or(3e-3);
    let decoder_blocks = arg(3).map_or(2, |v| v as usize);
    let kernel = arg(4).map_or(3, |v| v as usize);
    let batch_size = arg(5).map_or(4, |v| v as usize);

    let dir = tempfile::tempdir().expect("temp dir");
    let synth = SynthConfig { n_speakers: 4, clips_per_speaker: 5, split: [20, 0, 0], ..SynthConfig::default() };
    let manifest = synth_corpus(&synth, dir.path())?;

    let extractor = FeatureExtractor::default();
    let mut frames = Vec::new();
    for r in &manifest.records {
        let w = voicelike::audio::load_mono(manifest.resolve(&r.audio), synth.sample_rate)?;
        frames.extend_from_slice(extractor.extract(&w)?.data());
    }
    let km = KMeansConfig { k: 32, iterations: Some(500), ..KMeansConfig::default() };
    let codebook = fit_minibatch_kmeans(&frames, 80, &km)?;

    let cfg = ConverterConfig { vocab: 32, embed_dim, decoder_blocks, kernel, speaker_dim: synth.embedding_dim, ..ConverterConfig::default() };
    let model = ConverterModel::new(cfg)?;
    let examples = prepare_examples(&manifest, None, &codebook, &model)?;
    let tokens: usize = examples.iter().map(|e| e.units.len()).sum();
    let frames: usize = examples.iter().map(|e| e.mel.n_frames()).sum();
    println!("{} utterances, {tokens} tokens, {frames} frames", examples.len());

    let t0 = std::time::Instant::now();
    let mut tc = ConverterTrainConfig { steps, batch_size, ..ConverterTrainConfig::default() };
    tc.adam.lr = lr;
    let (model, history) = train_on_examples(model, &examples, &tc)?;
    let stats = fit_stats(&model, &examples, 1.0)?;
    println!(
        "{steps} steps in {:.1?}: final loss {:.4}, mel MSE {:.4} (log-mel {:.4}), duration MAE {:.3}",
        t0.elapsed(),
        history.steps.last().map_or(f64::NAN, |s| s.loss),
        stats.mel_mse,
        stats.mel_mse_raw,
        stats.duration_mae
    );
    Ok(())
}
