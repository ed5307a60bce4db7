//! Synthetic clean and noise recordings for experiments without a speech corpus.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NamedClip;
use crate::error::{Error, Result};
use crate::signal::{AudioClip, SAMPLE_RATE};
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    FilteredWhite,
    Chirp,
    Impulses,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::FilteredWhite, NoiseKind::Chirp, NoiseKind::Impulses];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub n_noise: usize,
    pub min_secs: f64,
    pub max_secs: f64,
    pub noise_secs: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// `n` training utterances and a fifth as many test utterances.
    pub fn with_train_size(n: usize, seed: u64) -> Self {
        Self {
            n_train: n,
            n_test: (n / 5).max(1),
            n_noise: 12,
            min_secs: 1.0,
            max_secs: 1.5,
            noise_secs: 3.0,
            seed,
        }
    }
}

fn samples_for(secs: f64) -> usize {
    (secs * SAMPLE_RATE as f64).round() as usize
}

/// Voiced "syllables" of 80 to 250 ms, each with its own pitch glide and
/// two formant-like resonances shaping up to 16 harmonics. Between syllables
/// the level dips to a fifth of the peak but never reaches zero.
pub fn speech_like(seed: u64, secs: f64) -> Result<AudioClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples_for(secs);
    let sr = SAMPLE_RATE as f64;
    let base_f0 = rng.gen_range(100.0..300.0);
    let level = rng.gen_range(0.2..0.5);
    let mut out = Vec::with_capacity(n);
    let mut phase = 0.0;
    while out.len() < n {
        let len = ((rng.gen_range(0.08..0.25) * sr) as usize).min(n - out.len());
        let f_start = base_f0 * rng.gen_range(0.8..1.25);
        let f_end = f_start * rng.gen_range(0.85..1.15);
        let formants = [rng.gen_range(300.0..900.0), rng.gen_range(900.0..2500.0)];
        let harmonics = ((4000.0 / f_start) as usize).clamp(2, 16);
        let amps: Vec<f64> = (1..=harmonics)
            .map(|k| {
                let f = k as f64 * f_start;
                let res: f64 = formants
                    .iter()
                    .map(|fc| (-((f - fc) / 250.0).powi(2)).exp())
                    .sum();
                (0.15 + res) / (k as f64).sqrt()
            })
            .collect();
        let norm: f64 = amps.iter().sum();
        for i in 0..len {
            let frac = i as f64 / len as f64;
            phase += 2.0 * PI * (f_start + (f_end - f_start) * frac) / sr;
            let env = 0.2 + 0.8 * (PI * frac).sin();
            let tone: f64 = amps
                .iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * phase).sin())
                .sum();
            out.push(level * env * tone / norm);
        }
    }
    AudioClip::new(out, SAMPLE_RATE)
}

pub fn synth_noise(kind: NoiseKind, seed: u64, secs: f64) -> Result<AudioClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples_for(secs);
    let sr = SAMPLE_RATE as f64;
    let mut out = Vec::with_capacity(n);
    match kind {
        NoiseKind::FilteredWhite => {
            // one-pole low-pass, or its high-pass complement
            let a = rng.gen_range(0.0..0.95);
            let highpass = rng.gen_bool(0.3);
            let mut y = 0.0;
            for _ in 0..n {
                let x: f64 = rng.gen_range(-1.0..1.0);
                y = a * y + (1.0 - a) * x;
                out.push(if highpass { x - y } else { y });
            }
        }
        NoiseKind::Chirp => {
            let (lo, hi) = (rng.gen_range(150.0..600.0), rng.gen_range(2000.0..7000.0));
            let period = rng.gen_range(0.3..1.2);
            let mut phase = 0.0;
            for i in 0..n {
                let frac = (i as f64 / sr / period).fract();
                phase += 2.0 * PI * (lo + (hi - lo) * frac) / sr;
                out.push(phase.sin() + 0.05 * rng.gen_range(-1.0..1.0));
            }
        }
        NoiseKind::Impulses => {
            let rate = rng.gen_range(5.0..30.0);
            let decay = rng.gen_range(0.9..0.99);
            let mut ring = 0.0;
            for _ in 0..n {
                if rng.gen_bool(rate / sr) {
                    ring = rng.gen_range(0.5..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                }
                out.push(ring + 0.02 * rng.gen_range(-1.0..1.0));
                ring *= -decay;
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let out = out.into_iter().map(|s| 0.5 * s / peak).collect();
    AudioClip::new(out, SAMPLE_RATE)
}

/// Disjoint train/test clean sets plus a pool of noises, all derived from
/// `config.seed`.
pub fn synth_corpus(config: &SynthConfig) -> Result<(Vec<NamedClip>, Vec<NamedClip>, Vec<NamedClip>)> {
    if config.n_train == 0 || config.n_test == 0 || config.n_noise == 0 {
        return Err(Error::Config("synthetic set sizes must be positive".into()));
    }
    if !(config.min_secs > 0.0 && config.min_secs <= config.max_secs) || config.noise_secs <= 0.0 {
        return Err(Error::Config("synthetic durations must be positive and ordered".into()));
    }
    let clean = |prefix: &str, count: usize| -> Result<Vec<NamedClip>> {
        (0..count)
            .map(|i| {
                let id = format!("{prefix}{i:04}");
                let seed = derive_seed(config.seed, &id);
                let secs = ChaCha8Rng::seed_from_u64(seed ^ 1).gen_range(config.min_secs..=config.max_secs);
                Ok(NamedClip {
                    clip: speech_like(seed, secs)?,
                    id,
                })
            })
            .collect()
    };
    let noise = (0..config.n_noise)
        .map(|i| {
            let kind = NoiseKind::ALL[i % NoiseKind::ALL.len()];
            let id = format!("noise{i:03}");
            Ok(NamedClip {
                clip: synth_noise(kind, derive_seed(config.seed, &id), config.noise_secs)?,
                id,
            })
        })
        .collect::<Result<_>>()?;
    Ok((clean("tr", config.n_train)?, clean("te", config.n_test)?, noise))
}
