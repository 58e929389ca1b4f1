//! Generate a small planted corpus, train the likability predictor on it and
//! report test-set rank correlation and liked/disliked accuracy.
//!
//! ```text
//! cargo run --release --example train_predictor [epochs]
//! ```

use voicelike::audio::{load_mono, log_mel_spectrogram};
use voicelike::manifest::Split;
use voicelike::metrics::{accuracy_f1, spearman_srcc, LikeLabel};
use voicelike::predictor::{apply_calibration, build_model, fit_calibration, predict_raw, train, LikabilityRating, TrainConfig};
use voicelike::synth::{synth_corpus, SynthConfig};

fn main() -> voicelike::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let dir = tempfile::tempdir().expect("temp dir");
    let manifest = synth_corpus(&SynthConfig::default(), dir.path())?;

    let mut cfg = TrainConfig { epochs, seed: 1, ..TrainConfig::default() };
    cfg.augment.ir_dir = Some(dir.path().join("ir"));
    let t0 = std::time::Instant::now();
    let (model, history) = train(build_model(1), &manifest, &cfg)?;
    println!("trained {} epochs in {:.1?}, best epoch {}", history.epochs.len(), t0.elapsed(), history.best_epoch);

    let predict = |split| -> voicelike::Result<Vec<(LikabilityRating, LikabilityRating)>> {
        manifest
            .split(split)
            .map(|r| {
                let w = load_mono(manifest.resolve(&r.audio), model.sample_rate)?;
                let y = predict_raw(&model, &log_mel_spectrogram(&w, &model.mel)?)?;
                Ok((y, LikabilityRating::new(r.ratings.expect("synthetic ratings"))))
            })
            .collect()
    };
    let val = predict(Split::Val)?;
    let (vp, vt): (Vec<_>, Vec<_>) = val.into_iter().unzip();
    let calib = fit_calibration(&vp, &vt)?;

    let test = predict(Split::Test)?;
    let pred: Vec<LikabilityRating> = test.iter().map(|(y, _)| apply_calibration(&calib, y)).collect();
    let truth: Vec<LikabilityRating> = test.iter().map(|(_, t)| *t).collect();
    let p: Vec<f64> = pred.iter().flat_map(|r| r.values).collect();
    let t: Vec<f64> = truth.iter().flat_map(|r| r.values).collect();
    let labels = |rs: &[LikabilityRating]| rs.iter().map(|r| r.label()).collect::<Vec<_>>();
    let (acc, f1) = accuracy_f1(&labels(&pred), &labels(&truth), LikeLabel::Liked)?;
    println!("test SRCC {:.4}  accuracy {acc:.3}  F1 {f1:.3}", spearman_srcc(&p, &t)?);
    Ok(())
}
