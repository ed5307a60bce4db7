//! Audio clips, framing and magnitude spectrogram features.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio with amplitudes nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidAudio("clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidAudio(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
    Rectangular,
}

/// Everything that determines how a waveform becomes model input.
///
/// The configuration is embedded in checkpoints; a model refuses to score
/// features computed with a different one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub window: WindowKind,
    /// Apply `ln(1 + x)` to the (scaled) magnitudes.
    pub log_compress: bool,
    /// Global multiplier applied to magnitudes before compression.
    pub scale: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            frame_ms: 32.0,
            hop_ms: 16.0,
            fft_size: 512,
            window: WindowKind::Hann,
            log_compress: false,
            scale: 1.0,
        }
    }
}

impl FeatureConfig {
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn frame_samples(&self) -> Result<usize> {
        ms_to_samples("frame length", self.frame_ms, self.sample_rate)
    }

    pub fn hop_samples(&self) -> Result<usize> {
        ms_to_samples("hop", self.hop_ms, self.sample_rate)
    }

    pub fn geometry(&self) -> Result<FrameGeometry> {
        FrameGeometry::new(self.frame_samples()?, self.hop_samples()?)
    }

    /// FNV-1a over the canonical JSON encoding.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(self).expect("feature config serializes");
        crate::util::fnv1a64(json.as_bytes())
    }
}

fn ms_to_samples(what: &'static str, ms: f64, sample_rate: u32) -> Result<usize> {
    let exact = ms * sample_rate as f64 / 1000.0;
    let rounded = exact.round();
    if ms.is_nan() || ms <= 0.0 || (exact - rounded).abs() > 1e-9 || rounded < 1.0 {
        return Err(Error::FractionalSamples {
            what,
            ms,
            sample_rate,
        });
    }
    Ok(rounded as usize)
}

/// Frame length and hop, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub frame_len: usize,
    pub hop: usize,
}

impl FrameGeometry {
    pub fn new(frame_len: usize, hop: usize) -> Result<Self> {
        if frame_len == 0 || hop == 0 {
            return Err(Error::Config("frame length and hop must be positive".into()));
        }
        Ok(Self { frame_len, hop })
    }

    /// `floor((n - L) / H) + 1`, or an error when fewer than `L` samples.
    pub fn frame_count(&self, n_samples: usize) -> Result<usize> {
        if n_samples < self.frame_len {
            return Err(Error::TooShort {
                samples: n_samples,
                needed: self.frame_len,
            });
        }
        Ok((n_samples - self.frame_len) / self.hop + 1)
    }

    /// Half-open sample range covered by frames `start..=end`.
    pub fn sample_range(&self, start: usize, end: usize) -> std::ops::Range<usize> {
        start * self.hop..end * self.hop + self.frame_len
    }
}

/// Contiguous, possibly overlapping views into a clip.
#[derive(Debug, Clone)]
pub struct Frames<'a> {
    samples: &'a [f64],
    geometry: FrameGeometry,
    count: usize,
}

impl<'a> Frames<'a> {
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.geometry
    }

    pub fn get(&self, t: usize) -> &'a [f64] {
        let start = t * self.geometry.hop;
        &self.samples[start..start + self.geometry.frame_len]
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        (0..self.count).map(move |t| self.get(t))
    }
}

pub fn frame_signal(clip: &AudioClip, frame_ms: f64, hop_ms: f64) -> Result<Frames<'_>> {
    let geometry = FrameGeometry::new(
        ms_to_samples("frame length", frame_ms, clip.sample_rate)?,
        ms_to_samples("hop", hop_ms, clip.sample_rate)?,
    )?;
    let count = geometry.frame_count(clip.len())?;
    Ok(Frames {
        samples: &clip.samples,
        geometry,
        count,
    })
}

pub fn window(kind: WindowKind, len: usize) -> Vec<f64> {
    match kind {
        // periodic form: w[n] = 0.5 - 0.5 cos(2 pi n / L)
        WindowKind::Hann => (0..len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
            .collect(),
        WindowKind::Rectangular => vec![1.0; len],
    }
}

/// F x T magnitude matrix, stored frame-major so that `frame(t)` is the
/// feature vector fed to the model at step t.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: usize,
    frames: usize,
    data: Vec<f64>,
    pub frame_length_samples: usize,
    pub hop_samples: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn from_frames(
        bins: usize,
        frames: usize,
        data: Vec<f64>,
        geometry: FrameGeometry,
        sample_rate: u32,
    ) -> Result<Self> {
        if data.len() != bins * frames || frames == 0 || bins == 0 {
            return Err(Error::Shape {
                op: "spectrogram",
                detail: format!("{} values for {bins} bins x {frames} frames", data.len()),
            });
        }
        Ok(Self {
            bins,
            frames,
            data,
            frame_length_samples: geometry.frame_len,
            hop_samples: geometry.hop,
            sample_rate,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[frame * self.bins + bin]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    /// Frame-major values (T rows of F).
    pub fn as_frame_major(&self) -> &[f64] {
        &self.data
    }

    pub fn frame_time_secs(&self, t: usize) -> f64 {
        (t * self.hop_samples) as f64 / self.sample_rate as f64
    }

    /// Rows are bins, columns are frames.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 12);
        for k in 0..self.bins {
            for t in 0..self.frames {
                if t > 0 {
                    out.push(',');
                }
                write!(out, "{}", self.get(k, t)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn spectrogram(clip: &AudioClip, config: &FeatureConfig) -> Result<Spectrogram> {
    if clip.sample_rate != config.sample_rate {
        return Err(Error::InvalidAudio(format!(
            "clip is {} Hz, features expect {} Hz",
            clip.sample_rate, config.sample_rate
        )));
    }
    let frames = frame_signal(clip, config.frame_ms, config.hop_ms)?;
    let geometry = frames.geometry();
    if config.fft_size < geometry.frame_len {
        return Err(Error::Config(format!(
            "fft size {} is shorter than the {}-sample frame",
            config.fft_size, geometry.frame_len
        )));
    }
    let bins = config.bins();
    let win = window(config.window, geometry.frame_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(config.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); config.fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(bins * frames.len());
    for frame in frames.iter() {
        for (slot, (x, w)) in buf.iter_mut().zip(frame.iter().zip(&win)) {
            *slot = Complex::new(x * w, 0.0);
        }
        for slot in buf[geometry.frame_len..].iter_mut() {
            *slot = Complex::new(0.0, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend(buf[..bins].iter().map(|c| {
            let m = c.norm() * config.scale;
            if config.log_compress {
                m.ln_1p()
            } else {
                m
            }
        }));
    }
    Spectrogram::from_frames(bins, frames.len(), data, geometry, clip.sample_rate)
}
