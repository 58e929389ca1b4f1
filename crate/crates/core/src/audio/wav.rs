use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

/// Read a RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float samples.
///
/// 16-bit samples are divided by 32768, so -32768 maps to exactly -1.0.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_wav(std::io::BufReader::new(file))
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))
}

/// Same as [`load_wav`] but from any reader.
pub fn read_wav<R: std::io::Read>(reader: R) -> Result<Waveform> {
    let mut r = WavReader::new(reader).map_err(|e| Error::Wav(e.to_string()))?;
    let spec = r.spec();
    let n_ch = spec.channels as usize;
    if n_ch == 0 {
        return Err(Error::Wav("zero channels".into()));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => r
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (SampleFormat::Float, 32) => r
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (fmt, bits) => {
            return Err(Error::Wav(format!(
                "unsupported encoding {fmt:?} with {bits} bits per sample"
            )))
        }
    };
    if interleaved.is_empty() {
        return Err(Error::Wav("zero-length data chunk".into()));
    }
    let frames = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (c, &s) in channels.iter_mut().zip(frame) {
            c.push(s);
        }
    }
    Waveform::new(channels, spec.sample_rate)
}

/// Write a waveform as 16-bit PCM, clipping to [-1, 1].
pub fn write_wav_pcm16(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: w.num_channels() as u16,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let wav_err = |e: hound::Error| Error::Wav(format!("{}: {e}", path.display()));
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    for t in 0..w.len() {
        for c in w.channels() {
            let v = (c[t].clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v).map_err(wav_err)?;
        }
    }
    writer.finalize().map_err(wav_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-rolled canonical 44-byte-header PCM16 encoder, independent of hound.
    pub(crate) fn encode_pcm16(channels: u16, rate: u32, interleaved: &[i16]) -> Vec<u8> {
        let data_len = (interleaved.len() * 2) as u32;
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36 + data_len).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&rate.to_le_bytes());
        b.extend_from_slice(&(rate * channels as u32 * 2).to_le_bytes());
        b.extend_from_slice(&(channels * 2).to_le_bytes());
        b.extend_from_slice(&16u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&data_len.to_le_bytes());
        for s in interleaved {
            b.extend_from_slice(&s.to_le_bytes());
        }
        b
    }

    #[test]
    fn silence_file() {
        let bytes = encode_pcm16(1, 22050, &vec![0i16; 22050]);
        let w = read_wav(&bytes[..]).unwrap();
        assert_eq!(w.len(), 22050);
        assert_eq!(w.sample_rate(), 22050);
        assert!(w.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pcm16_endpoint_scales_to_minus_one() {
        let bytes = encode_pcm16(1, 8000, &[-32768, 16384, 32767]);
        let w = read_wav(&bytes[..]).unwrap();
        assert_eq!(w.samples()[0], -1.0);
        assert_eq!(w.samples()[1], 0.5);
    }

    #[test]
    fn stereo_read_back_bit_exact() {
        let n = 1000usize;
        let mut inter = Vec::with_capacity(2 * n);
        for i in 0..n {
            inter.push(((i * 37) as i16).wrapping_sub(1000));
            inter.push((i as i16).wrapping_mul(-11));
        }
        let bytes = encode_pcm16(2, 44100, &inter);
        let w = read_wav(&bytes[..]).unwrap();
        assert_eq!(w.num_channels(), 2);
        assert_eq!(w.sample_rate(), 44100);
        assert_eq!(w.channel(0).len(), n);
        assert_eq!(w.channel(1).len(), n);
        for i in 0..n {
            assert_eq!(w.channel(0)[i], inter[2 * i] as f32 / 32768.0);
            assert_eq!(w.channel(1)[i], inter[2 * i + 1] as f32 / 32768.0);
        }
    }

    #[test]
    fn malformed_and_empty_rejected() {
        assert!(read_wav(&b"RIFX garbage"[..]).is_err());
        let empty = encode_pcm16(1, 8000, &[]);
        let err = read_wav(&empty[..]).unwrap_err();
        assert!(err.to_string().contains("zero-length"));
    }

    #[test]
    fn unsupported_encoding_rejected() {
        let mut bytes = encode_pcm16(1, 8000, &[1, 2, 3, 4]);
        // bits per sample -> 8
        bytes[34] = 8;
        bytes[32] = 1;
        assert!(read_wav(&bytes[..]).is_err());
    }

    #[test]
    fn pcm16_write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let samples: Vec<f32> = (0..100).map(|i| (i as f32 - 50.0) / 64.0).collect();
        let w = Waveform::mono(samples.clone(), 16000).unwrap();
        write_wav_pcm16(&p, &w).unwrap();
        let back = load_wav(&p).unwrap();
        assert_eq!(back.samples(), &samples[..]);
    }
}
