//! 16-bit PCM mono WAV input and output.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{AudioClip, SAMPLE_RATE};

const FULL_SCALE: f64 = 32768.0;

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let format_err = |reason: String| Error::WavFormat {
        path: path.to_path_buf(),
        reason,
    };
    let reader = hound::WavReader::open(path).map_err(|e| format_err(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(format_err(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(format_err(format!(
            "{}-bit {:?} samples, expected 16-bit signed PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(format_err(format!(
            "{} Hz, expected {SAMPLE_RATE} Hz",
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| format_err(e.to_string()))?;
    AudioClip::new(samples, spec.sample_rate)
}

/// Quantizes to 16 bits; samples outside [-1, 1) saturate.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| Error::WavFormat {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in clip.samples() {
        let q = (s * FULL_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = AudioClip::new(
            (0..1000).map(|i| (i as f64 * 0.05).sin() * 0.9).collect(),
            SAMPLE_RATE,
        )
        .unwrap();
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), clip.len());
        for (a, b) in back.samples().iter().zip(clip.samples()) {
            assert!((a - b).abs() <= 0.5 / FULL_SCALE + 1e-12);
        }
    }

    #[test]
    fn rejects_stereo_and_other_rates() {
        let dir = tempfile::tempdir().unwrap();
        for (channels, rate, bits) in [(2u16, 16_000u32, 16u16), (1, 8000, 16), (1, 16_000, 8)] {
            let path = dir.path().join(format!("{channels}_{rate}_{bits}.wav"));
            let spec = hound::WavSpec {
                channels,
                sample_rate: rate,
                bits_per_sample: bits,
                sample_format: hound::SampleFormat::Int,
            };
            let mut w = hound::WavWriter::create(&path, spec).unwrap();
            for _ in 0..100 {
                if bits == 8 {
                    w.write_sample(0i8).unwrap();
                } else {
                    w.write_sample(0i16).unwrap();
                }
            }
            w.finalize().unwrap();
            assert!(matches!(read_wav(&path), Err(Error::WavFormat { .. })));
        }
    }
}
