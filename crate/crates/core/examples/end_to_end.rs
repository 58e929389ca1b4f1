//! The whole synthetic pipeline: generate a corpus, train and calibrate the
//! predictor, annotate the corpus, fit units, train the converter and sweep
//! target likability on the test split.
//!
//! ```text
//! cargo run --release --example end_to_end [converter_steps] [s]
//! ```

use voicelike::converter::{ConverterConfig, ConverterModel, ConverterTrainConfig, train_converter};
use voicelike::evalharness::{default_targets, likability_sweep, load_sweep_items};
use voicelike::manifest::Split;
use voicelike::predictor::{annotate_corpus, build_model, calibrate_on_split, train, TrainConfig};
use voicelike::synth::{synth_corpus, SynthConfig};
use voicelike::units::{fit_minibatch_kmeans, manifest_features, stack_frames, FeatureExtractor, KMeansConfig};

fn main() -> voicelike::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps = args.first().and_then(|a| a.parse().ok()).unwrap_or(4000);
    let s = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(2.5);
    let t0 = std::time::Instant::now();

    let dir = tempfile::tempdir().expect("temp dir");
    let synth = SynthConfig::default();
    let corpus = synth_corpus(&synth, dir.path())?;

    let mut pcfg = TrainConfig { epochs: 10, seed: 1, ..TrainConfig::default() };
    pcfg.augment.ir_dir = Some(dir.path().join("ir"));
    let (predictor, _) = train(build_model(1), &corpus, &pcfg)?;
    let calib = calibrate_on_split(&predictor, &corpus, Split::Val)?;
    let annotated = annotate_corpus(&predictor, &calib, &corpus).manifest;
    println!("predictor ready after {:.1?}", t0.elapsed());

    let extractor = FeatureExtractor::new(predictor.mel.clone());
    let feats: Vec<_> = manifest_features(&annotated, Some(Split::Train), &extractor, synth.sample_rate)?
        .into_iter()
        .map(|(_, f)| f)
        .collect();
    let (frames, dim) = stack_frames(&feats)?;
    let codebook = fit_minibatch_kmeans(&frames, dim, &KMeansConfig::default())?;
    println!("codebook ready after {:.1?}", t0.elapsed());

    let ccfg = ConverterConfig {
        vocab: codebook.k(),
        embed_dim: 64,
        speaker_dim: synth.embedding_dim,
        ..ConverterConfig::default()
    };
    let tcfg = ConverterTrainConfig { steps, ..ConverterTrainConfig::default() };
    let (converter, _) = train_converter(ConverterModel::new(ccfg)?, &annotated, &codebook, &tcfg)?;
    println!("converter ready after {:.1?}", t0.elapsed());

    let items = load_sweep_items(&annotated, Some(Split::Test), &codebook, &converter)?;
    let report = likability_sweep(&converter, &predictor, &calib, &codebook, &items, &default_targets(), s)?;
    for p in &report.curve {
        println!("target {:+.1}: mean predicted {:+.3}", p.target, p.mean);
    }
    println!(
        "s = {s}: Spearman(target, prediction) {:.3} over {} conversions, curve {:.3}; total {:.1?}",
        report.target_srcc()?,
        report.cells.len(),
        report.curve_srcc()?,
        t0.elapsed()
    );
    Ok(())
}
