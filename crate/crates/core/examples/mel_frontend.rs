//! Log-mel analysis of a two-tone signal: prints the frame count and the two
//! strongest mel bins with their centre frequencies.
//!
//! ```text
//! cargo run --release --example mel_frontend
//! ```

use voicelike::audio::{log_mel_spectrogram, MelConfig, Waveform};

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

fn main() -> voicelike::Result<()> {
    let sr = 22050;
    let tone = |f: f64, i: usize| (2.0 * std::f64::consts::PI * f * i as f64 / sr as f64).sin();
    let x: Vec<f32> = (0..sr as usize).map(|i| (0.4 * tone(440.0, i) + 0.2 * tone(3000.0, i)) as f32).collect();
    let cfg = MelConfig::default();
    let mel = log_mel_spectrogram(&Waveform::mono(x, sr)?, &cfg)?;
    println!("{} frames x {} bins (hop {}, window {})", mel.n_frames(), mel.n_mels(), cfg.hop, cfg.win);

    let mut avg = vec![0.0; mel.n_mels()];
    for t in 0..mel.n_frames() {
        avg.iter_mut().zip(mel.frame(t)).for_each(|(a, v)| *a += v / mel.n_frames() as f64);
    }
    let mut order: Vec<usize> = (0..avg.len()).collect();
    order.sort_by(|&a, &b| avg[b].total_cmp(&avg[a]));
    let step = (hz_to_mel(cfg.f_max) - hz_to_mel(cfg.f_min)) / (cfg.n_mels + 1) as f64;
    let mut peaks = Vec::new();
    for &b in &order {
        if peaks.iter().all(|&p: &usize| p.abs_diff(b) > 3) {
            peaks.push(b);
        }
        if peaks.len() == 2 {
            break;
        }
    }
    for b in peaks {
        let centre = mel_to_hz(hz_to_mel(cfg.f_min) + step * (b + 1) as f64);
        println!("bin {b:2}: centre {centre:7.1} Hz, mean log power {:.2}", avg[b]);
    }
    Ok(())
}
