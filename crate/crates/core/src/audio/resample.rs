use super::Waveform;
use crate::error::{Error, Result};

const ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.6;
const MAX_TABLE_PHASES: u64 = 4096;

/// Band-limited sample-rate conversion with a Kaiser-windowed sinc kernel.
///
/// The cutoff sits at the lower of the two Nyquist frequencies. When the
/// rate ratio reduces to at most 4096 phases the kernel is tabulated per
/// phase; otherwise taps are evaluated on the fly.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidInput("target rate must be positive".into()));
    }
    w.require_mono("resample")?;
    let src = w.sample_rate() as u64;
    let dst = target_rate as u64;
    if src == dst {
        return Ok(w.clone());
    }
    let g = gcd(src, dst);
    let up = dst / g;
    let down = src / g;
    let x = w.samples();
    let out_len = ((x.len() as f64) * dst as f64 / src as f64).round() as usize;
    let fc = (dst as f64 / src as f64).min(1.0);
    let half = (ZERO_CROSSINGS / fc).ceil() as i64;
    let i0_beta = bessel_i0(KAISER_BETA);

    let kernel = |tau: f64| -> f64 {
        let r = tau / half as f64;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let win = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta;
        fc * sinc(fc * tau) * win
    };
    let taps_for = |frac: f64| -> Vec<f64> {
        let mut taps: Vec<f64> = (-half + 1..=half).map(|j| kernel(frac - j as f64)).collect();
        let sum: f64 = taps.iter().sum();
        if sum.abs() > 1e-12 {
            taps.iter_mut().for_each(|t| *t /= sum);
        }
        taps
    };

    let table: Option<Vec<Vec<f64>>> = (up <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|p| taps_for(p as f64 / up as f64)).collect());

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let pos = n * down;
        let i0 = (pos / up) as i64;
        let phase = pos % up;
        let owned;
        let taps = match &table {
            Some(t) => &t[phase as usize],
            None => {
                owned = taps_for(phase as f64 / up as f64);
                &owned
            }
        };
        let mut acc = 0.0;
        for (j, &h) in (-half + 1..=half).zip(taps) {
            let k = i0 + j;
            if k >= 0 && (k as usize) < x.len() {
                acc += h * x[k as usize] as f64;
            }
        }
        out.push(acc as f32);
    }
    Waveform::mono(out, target_rate)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, rate: u32, n: usize) -> Vec<f32> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin() as f32)
            .collect()
    }

    #[test]
    fn identity_rate() {
        let w = Waveform::mono(vec![0.1, 0.2, 0.3], 22050).unwrap();
        assert_eq!(resample(&w, 22050).unwrap(), w);
    }

    #[test]
    fn length_arithmetic() {
        let w = Waveform::mono(vec![0.0; 44100], 44100).unwrap();
        assert_eq!(resample(&w, 22050).unwrap().len(), 22050);
        let w = Waveform::mono(vec![0.0; 1000], 16000).unwrap();
        assert_eq!(resample(&w, 22050).unwrap().len(), 1378);
    }

    #[test]
    fn rejects_zero_rate_and_stereo() {
        let w = Waveform::mono(vec![0.0; 10], 8000).unwrap();
        assert!(resample(&w, 0).is_err());
        let s = Waveform::new(vec![vec![0.0; 10]; 2], 8000).unwrap();
        assert!(resample(&s, 4000).is_err());
    }

    fn correlation(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
        let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn sine_downsample_matches_analytic() {
        let w = Waveform::mono(sine(1000.0, 44100, 44100), 44100).unwrap();
        let out = resample(&w, 22050).unwrap();
        let reference = sine(1000.0, 22050, 22050);
        // skip kernel edge transients
        let m = 64;
        let c = correlation(&out.samples()[m..22050 - m], &reference[m..22050 - m]);
        assert!(c > 0.999, "correlation {c}");
    }

    #[test]
    fn sine_upsample_irrational_ratio() {
        let w = Waveform::mono(sine(440.0, 16000, 16000), 16000).unwrap();
        let out = resample(&w, 22050).unwrap();
        let reference = sine(440.0, 22050, out.len());
        let m = 100;
        let n = out.len();
        let c = correlation(&out.samples()[m..n - m], &reference[m..n - m]);
        assert!(c > 0.999, "correlation {c}");
    }

    #[test]
    fn bessel_known_value() {
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
    }
}
