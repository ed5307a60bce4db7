//! Labeled corpora: SNR-exact mixing, pseudo-score labels and manifests.

mod manifest;
mod synth;

pub use manifest::{Manifest, ManifestHeader, MANIFEST_SCHEMA, MANIFEST_VERSION};
pub use synth::{speech_like, synth_corpus, synth_noise, NoiseKind, SynthConfig};

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::signal::{AudioClip, FrameGeometry};
use crate::util::{derive_seed, par_map};
use crate::wav::write_wav;

/// SNR levels of the mixing grid, in dB.
pub const DEFAULT_SNR_GRID: [f64; 5] = [-10.0, -5.0, 5.0, 10.0, 20.0];

/// (SNR dB, pseudo score) rows; clean recordings score 8.
const SCORE_TABLE: [(f64, f64); 5] = [(-10.0, 1.0), (-5.0, 2.0), (5.0, 4.0), (10.0, 5.0), (20.0, 7.0)];
pub const CLEAN_PSEUDO_SCORE: f64 = 8.0;

/// Mixing SNR, or the marker for an unmixed recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrLabel {
    Clean,
    Db(f64),
}

impl Serialize for SnrLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SnrLabel::Clean => s.serialize_str("clean"),
            SnrLabel::Db(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for SnrLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "clean" => Ok(SnrLabel::Clean),
            serde_json::Value::Number(n) => n
                .as_f64()
                .filter(|v| v.is_finite())
                .map(SnrLabel::Db)
                .ok_or_else(|| de::Error::custom("snr_db must be finite")),
            other => Err(de::Error::custom(format!(
                "snr_db must be a number or \"clean\", got {other}"
            ))),
        }
    }
}

impl fmt::Display for SnrLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnrLabel::Clean => f.write_str("clean"),
            SnrLabel::Db(v) => write!(f, "{v}dB"),
        }
    }
}

/// Region of an utterance that receives noise. Frame bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Span {
    Full,
    Frames { start: usize, end: usize },
}

impl Span {
    /// Half-open sample range, validated against the clip length.
    pub fn sample_range(&self, n_samples: usize, geometry: FrameGeometry) -> Result<std::ops::Range<usize>> {
        match *self {
            Span::Full => Ok(0..n_samples),
            Span::Frames { start, end } => {
                if start > end {
                    return Err(Error::InvalidSpan(format!("frames {start}..={end} are empty")));
                }
                let frames = geometry.frame_count(n_samples)?;
                if end >= frames {
                    return Err(Error::InvalidSpan(format!(
                        "frame {end} is beyond the last frame {}",
                        frames - 1
                    )));
                }
                Ok(geometry.sample_range(start, end))
            }
        }
    }
}

impl Serialize for Span {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Span::Full => s.serialize_str("full"),
            Span::Frames { start, end } => [*start, *end].serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "full" => Ok(Span::Full),
            v @ serde_json::Value::Array(_) => {
                let [start, end]: [usize; 2] = serde_json::from_value(v).map_err(de::Error::custom)?;
                if start > end {
                    return Err(de::Error::custom("span start after end"));
                }
                Ok(Span::Frames { start, end })
            }
            other => Err(de::Error::custom(format!(
                "span must be \"full\" or [start, end], got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixRecipe {
    pub clean_id: String,
    pub noise_id: Option<String>,
    pub snr_db: SnrLabel,
    pub span: Span,
    pub seed: u64,
}

/// One manifest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledUtterance {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: String,
    #[serde(flatten)]
    pub recipe: MixRecipe,
    pub target_score: f64,
    /// Noise gain applied during mixing.
    pub gain: Option<f64>,
    pub noise_offset: Option<usize>,
    /// Whole-utterance factor applied after mixing to stay inside PCM range.
    pub rescale: f64,
}

impl LabeledUtterance {
    pub fn is_clean(&self) -> bool {
        self.recipe.snr_db == SnrLabel::Clean
    }
}

/// Piecewise-linear lookup in the SNR-to-score table.
///
/// Grid SNRs map exactly; values in between interpolate linearly; below
/// -10 dB the score is 1 and above 20 dB it stays at 7, since only unmixed
/// recordings earn 8.
pub fn pseudo_score(snr: SnrLabel) -> f64 {
    let db = match snr {
        SnrLabel::Clean => return CLEAN_PSEUDO_SCORE,
        SnrLabel::Db(db) => db,
    };
    let (first, last) = (SCORE_TABLE[0], SCORE_TABLE[SCORE_TABLE.len() - 1]);
    if db <= first.0 {
        return first.1;
    }
    if db >= last.0 {
        return last.1;
    }
    for w in SCORE_TABLE.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if db <= x1 {
            return y0 + (y1 - y0) * (db - x0) / (x1 - x0);
        }
    }
    unreachable!("db lies inside the table range")
}

/// Mean squared amplitude.
pub fn power(samples: &[f64]) -> f64 {
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

/// `10 log10(signal / noise)` from powers.
pub fn snr_db(signal_power: f64, noise_power: f64) -> f64 {
    10.0 * (signal_power / noise_power).log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixed {
    pub clip: AudioClip,
    pub gain: f64,
    pub noise_offset: usize,
}

/// Adds scaled noise to `clean` inside `span` so that the SNR measured over
/// the span equals `snr_db`.
///
/// The noise excerpt starts at a seeded random offset and wraps around when
/// the noise is shorter than the span. Samples outside the span are copied
/// unchanged. No clipping is applied here.
pub fn mix_at_snr(
    clean: &AudioClip,
    noise: &AudioClip,
    snr_db: f64,
    span: Span,
    geometry: FrameGeometry,
    seed: u64,
) -> Result<Mixed> {
    if !snr_db.is_finite() {
        return Err(Error::Config("SNR must be finite".into()));
    }
    if clean.sample_rate() != noise.sample_rate() {
        return Err(Error::InvalidAudio(format!(
            "clean is {} Hz but noise is {} Hz",
            clean.sample_rate(),
            noise.sample_rate()
        )));
    }
    let range = span.sample_range(clean.len(), geometry)?;
    let noise_len = noise.len();
    let offset = ChaCha8Rng::seed_from_u64(seed).gen_range(0..noise_len);
    let excerpt: Vec<f64> = (0..range.len())
        .map(|i| noise.samples()[(offset + i) % noise_len])
        .collect();
    let p_clean = power(&clean.samples()[range.clone()]);
    let p_noise = power(&excerpt);
    if p_clean == 0.0 {
        return Err(Error::DegenerateMix("clean signal"));
    }
    if p_noise == 0.0 {
        return Err(Error::DegenerateMix("noise excerpt"));
    }
    let gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut out = clean.samples().to_vec();
    for (o, n) in out[range].iter_mut().zip(&excerpt) {
        *o += gain * n;
    }
    Ok(Mixed {
        clip: AudioClip::new(out, clean.sample_rate())?,
        gain,
        noise_offset: offset,
    })
}

/// Scales the whole clip to peak 0.999 when any sample leaves [-1, 1].
/// Returns the factor applied (1 when untouched).
pub fn fit_pcm_range(clip: &AudioClip) -> Result<(AudioClip, f64)> {
    let peak = clip.samples().iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak <= 1.0 {
        return Ok((clip.clone(), 1.0));
    }
    let factor = 0.999 / peak;
    let scaled = clip.samples().iter().map(|s| s * factor).collect();
    Ok((AudioClip::new(scaled, clip.sample_rate())?, factor))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedClip {
    pub id: String,
    pub clip: AudioClip,
}

/// A labeled utterance together with its audio (already range-fitted).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedUtterance {
    pub record: LabeledUtterance,
    pub audio: AudioClip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<GeneratedUtterance>,
    pub test: Vec<GeneratedUtterance>,
}

fn check_ids(what: &str, clips: &[NamedClip]) -> Result<()> {
    if clips.is_empty() {
        return Err(Error::Corpus(format!("{what} set is empty")));
    }
    let mut seen = HashSet::new();
    for c in clips {
        if !seen.insert(c.id.as_str()) {
            return Err(Error::Corpus(format!("duplicate id {:?} in {what} set", c.id)));
        }
    }
    Ok(())
}

fn snr_tag(db: f64) -> String {
    format!("snr{db:+}").replace('.', "p")
}

/// Mixes one clean clip with a noise picked by `key`'s derived seed.
pub fn labeled_mix(
    split: &str,
    clean: &NamedClip,
    noise: &[NamedClip],
    snr: SnrLabel,
    span: Span,
    master_seed: u64,
    geometry: FrameGeometry,
) -> Result<GeneratedUtterance> {
    let (id, seed, mixed) = match snr {
        SnrLabel::Clean => (format!("{}_clean", clean.id), derive_seed(master_seed, &clean.id), None),
        SnrLabel::Db(db) => {
            let id = match span {
                Span::Full => format!("{}_{}", clean.id, snr_tag(db)),
                Span::Frames { start, end } => format!("{}_{}_f{start}-{end}", clean.id, snr_tag(db)),
            };
            let seed = derive_seed(master_seed, &id);
            let n = &noise[(seed % noise.len() as u64) as usize];
            let m = mix_at_snr(&clean.clip, &n.clip, db, span, geometry, seed)?;
            (id, seed, Some((n.id.clone(), m)))
        }
    };
    let (noise_id, gain, noise_offset, raw) = match mixed {
        Some((nid, m)) => (Some(nid), Some(m.gain), Some(m.noise_offset), m.clip),
        None => (None, None, None, clean.clip.clone()),
    };
    let (audio, rescale) = fit_pcm_range(&raw)?;
    Ok(GeneratedUtterance {
        record: LabeledUtterance {
            path: format!("{split}/{id}.wav"),
            id,
            recipe: MixRecipe {
                clean_id: clean.id.clone(),
                noise_id,
                snr_db: snr,
                span,
                seed,
            },
            target_score: pseudo_score(snr),
            gain,
            noise_offset,
            rescale,
        },
        audio,
    })
}

fn mix_split(
    split: &str,
    clean: &[NamedClip],
    noise: &[NamedClip],
    snr_grid: &[f64],
    seed: u64,
    geometry: FrameGeometry,
) -> Result<Vec<GeneratedUtterance>> {
    let mut jobs = Vec::with_capacity(clean.len() * (snr_grid.len() + 1));
    for c in clean {
        for &db in snr_grid {
            jobs.push((c, SnrLabel::Db(db)));
        }
        jobs.push((c, SnrLabel::Clean));
    }
    par_map(&jobs, |(c, snr)| labeled_mix(split, c, noise, *snr, Span::Full, seed, geometry))
        .into_iter()
        .collect()
}

/// Every clean utterance once per grid SNR (fully corrupted) plus once unmixed.
///
/// Output order and content depend only on the inputs and `seed`.
pub fn build_corpus(
    train_clean: &[NamedClip],
    test_clean: &[NamedClip],
    noise: &[NamedClip],
    snr_grid: &[f64],
    seed: u64,
    geometry: FrameGeometry,
) -> Result<Corpus> {
    check_ids("train clean", train_clean)?;
    check_ids("test clean", test_clean)?;
    check_ids("noise", noise)?;
    if snr_grid.is_empty() || snr_grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Corpus("SNR grid must be non-empty and finite".into()));
    }
    let train_ids: HashSet<&str> = train_clean.iter().map(|c| c.id.as_str()).collect();
    if let Some(c) = test_clean.iter().find(|c| train_ids.contains(c.id.as_str())) {
        return Err(Error::Corpus(format!(
            "clean utterance {:?} appears in both train and test",
            c.id
        )));
    }
    Ok(Corpus {
        train: mix_split("train", train_clean, noise, snr_grid, seed, geometry)?,
        test: mix_split("test", test_clean, noise, snr_grid, seed, geometry)?,
    })
}

/// Utterances corrupted at `snr_db` over one random contiguous frame span
/// covering between a quarter and a half of the utterance.
pub fn partial_span_set(
    clean: &[NamedClip],
    noise: &[NamedClip],
    snr_db: f64,
    seed: u64,
    geometry: FrameGeometry,
) -> Result<Vec<GeneratedUtterance>> {
    check_ids("clean", clean)?;
    check_ids("noise", noise)?;
    let jobs: Vec<(&NamedClip, Span)> = clean
        .iter()
        .map(|c| {
            let frames = geometry.frame_count(c.clip.len())?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("span/{}", c.id)));
            let len = rng.gen_range(frames / 4..=frames / 2).max(1);
            let start = rng.gen_range(0..=frames - len);
            Ok((c, Span::Frames { start, end: start + len - 1 }))
        })
        .collect::<Result<_>>()?;
    par_map(&jobs, |(c, span)| labeled_mix("localize", c, noise, SnrLabel::Db(snr_db), *span, seed, geometry))
        .into_iter()
        .collect()
}

/// Writes each utterance's audio below `dir` at its record path.
pub fn write_audio(dir: &Path, utterances: &[GeneratedUtterance]) -> Result<()> {
    for u in utterances {
        let path = dir.join(&u.record.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        write_wav(&path, &u.audio)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SAMPLE_RATE;

    fn geometry() -> FrameGeometry {
        FrameGeometry::new(512, 256).unwrap()
    }

    fn sine(freq: f64, amp: f64, n: usize) -> AudioClip {
        let s = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        AudioClip::new(s, SAMPLE_RATE).unwrap()
    }

    #[test]
    fn table_values_and_interpolation() {
        let cases = [(-10.0, 1.0), (-5.0, 2.0), (5.0, 4.0), (10.0, 5.0), (20.0, 7.0), (15.0, 6.0), (0.0, 3.0)];
        for (db, score) in cases {
            assert_eq!(pseudo_score(SnrLabel::Db(db)), score, "{db} dB");
        }
        assert_eq!(pseudo_score(SnrLabel::Clean), 8.0);
        assert_eq!(pseudo_score(SnrLabel::Db(-30.0)), 1.0);
        assert_eq!(pseudo_score(SnrLabel::Db(40.0)), 7.0);
    }

    #[test]
    fn equal_power_at_zero_db_has_unit_gain() {
        let clean = sine(16_000.0 / 64.0, 0.5, 16_000);
        let noise = sine(16_000.0 / 32.0, 0.5, 16_000);
        let m = mix_at_snr(&clean, &noise, 0.0, Span::Full, geometry(), 1).unwrap();
        assert!((m.gain - 1.0).abs() < 1e-9, "gain {}", m.gain);
    }

    #[test]
    fn sine_powers_give_closed_form_gain() {
        // whole periods over the span: clean power 0.5, noise power 0.125
        let clean = sine(250.0, 1.0, 16_000);
        let noise = sine(500.0, 0.5, 16_000);
        let m = mix_at_snr(&clean, &noise, 10.0, Span::Full, geometry(), 3).unwrap();
        assert!((m.gain - 0.4f64.sqrt()).abs() < 1e-6, "gain {}", m.gain);
        let added: Vec<f64> = m.clip.samples().iter().zip(clean.samples()).map(|(a, b)| a - b).collect();
        assert!((snr_db(power(clean.samples()), power(&added)) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn partial_span_is_confined() {
        let clean = sine(300.0, 0.4, 16_000 * 2);
        let noise = sine(1234.0, 0.3, 5000);
        let span = Span::Frames { start: 37, end: 87 };
        let m = mix_at_snr(&clean, &noise, 15.0, span, geometry(), 9).unwrap();
        let range = 37 * 256..87 * 256 + 512;
        for (i, (a, b)) in m.clip.samples().iter().zip(clean.samples()).enumerate() {
            if range.contains(&i) {
                continue;
            }
            assert_eq!(a.to_bits(), b.to_bits(), "sample {i}");
        }
        let added: Vec<f64> = m.clip.samples()[range.clone()]
            .iter()
            .zip(&clean.samples()[range.clone()])
            .map(|(a, b)| a - b)
            .collect();
        assert!((snr_db(power(&clean.samples()[range]), power(&added)) - 15.0).abs() < 0.01);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let silent = AudioClip::new(vec![0.0; 4000], SAMPLE_RATE).unwrap();
        let tone = sine(440.0, 0.5, 4000);
        assert!(matches!(
            mix_at_snr(&silent, &tone, 5.0, Span::Full, geometry(), 0),
            Err(Error::DegenerateMix("clean signal"))
        ));
        assert!(matches!(
            mix_at_snr(&tone, &silent, 5.0, Span::Full, geometry(), 0),
            Err(Error::DegenerateMix("noise excerpt"))
        ));
        let beyond = Span::Frames { start: 5, end: 400 };
        assert!(matches!(
            mix_at_snr(&tone, &tone, 5.0, beyond, geometry(), 0),
            Err(Error::InvalidSpan(_))
        ));
        let reversed = Span::Frames { start: 5, end: 4 };
        assert!(mix_at_snr(&tone, &tone, 5.0, reversed, geometry(), 0).is_err());
    }

    #[test]
    fn pcm_fit_only_when_needed() {
        let loud = AudioClip::new(vec![0.5, -2.0, 1.0], SAMPLE_RATE).unwrap();
        let (fitted, factor) = fit_pcm_range(&loud).unwrap();
        assert!((factor - 0.4995).abs() < 1e-15);
        assert!((fitted.samples()[1] + 0.999).abs() < 1e-15);
        let quiet = AudioClip::new(vec![0.5, -1.0], SAMPLE_RATE).unwrap();
        assert_eq!(fit_pcm_range(&quiet).unwrap().1, 1.0);
    }

    fn named(prefix: &str, n: usize, freq: f64) -> Vec<NamedClip> {
        (0..n)
            .map(|i| NamedClip {
                id: format!("{prefix}{i}"),
                clip: sine(freq + 10.0 * i as f64, 0.3, 8000),
            })
            .collect()
    }

    #[test]
    fn corpus_counts_and_labels() {
        let c = build_corpus(
            &named("a", 10, 200.0),
            &named("b", 2, 300.0),
            &named("n", 3, 1500.0),
            &DEFAULT_SNR_GRID,
            5,
            geometry(),
        )
        .unwrap();
        assert_eq!(c.train.len(), 60);
        assert_eq!(c.test.len(), 12);
        assert_eq!(c.train.iter().filter(|u| u.record.is_clean()).count(), 10);
        for u in &c.train {
            assert_eq!(u.record.target_score, pseudo_score(u.record.recipe.snr_db));
            assert!((1.0..=8.0).contains(&u.record.target_score));
        }
    }

    #[test]
    fn corpus_precondition_errors() {
        let g = geometry();
        let grid = DEFAULT_SNR_GRID;
        let a = named("a", 3, 200.0);
        let n = named("n", 2, 900.0);
        assert!(build_corpus(&a, &a[..1], &n, &grid, 1, g).is_err());
        assert!(build_corpus(&[], &named("b", 1, 1.0), &n, &grid, 1, g).is_err());
        let dup = vec![a[0].clone(), a[0].clone()];
        assert!(build_corpus(&dup, &named("b", 1, 300.0), &n, &grid, 1, g).is_err());
        assert!(build_corpus(&a, &named("b", 1, 300.0), &n, &[], 1, g).is_err());
    }

    #[test]
    fn partial_spans_lie_inside_utterances() {
        let set = partial_span_set(&named("c", 6, 220.0), &named("n", 2, 800.0), 15.0, 3, geometry()).unwrap();
        for u in set {
            let frames = geometry().frame_count(u.audio.len()).unwrap();
            match u.record.recipe.span {
                Span::Frames { start, end } => {
                    assert!(start <= end && end < frames);
                    assert!(end - start + 1 >= frames / 4);
                }
                Span::Full => panic!("expected a partial span"),
            }
            assert_eq!(u.record.target_score, 6.0);
        }
    }

    #[test]
    fn label_serde_forms() {
        assert_eq!(serde_json::to_string(&SnrLabel::Clean).unwrap(), "\"clean\"");
        assert_eq!(serde_json::to_string(&SnrLabel::Db(-5.0)).unwrap(), "-5.0");
        assert_eq!(serde_json::to_string(&Span::Frames { start: 37, end: 87 }).unwrap(), "[37,87]");
        assert_eq!(serde_json::from_str::<Span>("\"full\"").unwrap(), Span::Full);
        assert!(serde_json::from_str::<Span>("[9,3]").is_err());
        assert!(serde_json::from_str::<SnrLabel>("\"noisy\"").is_err());
    }
}
