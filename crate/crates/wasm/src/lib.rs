//! Browser bindings for the demo page in `www/`.
//!
//! A [`Session`] holds one synthetic utterance at a time: a speech-like clean
//! clip with a chosen noise mixed into part of it. The page draws its
//! spectrogram, scores it with one of two small embedded models and marks the
//! frames the score curve flags as degraded.

use sqa_core::corpus::{fit_pcm_range, mix_at_snr, speech_like, synth_noise, NoiseKind, Span};
use sqa_core::localize::{detect_regions, localization_iou, region_bounds, LocalizeConfig};
use sqa_core::model::{forward, Checkpoint};
use sqa_core::signal::{spectrogram, AudioClip, FeatureConfig, Spectrogram};
use wasm_bindgen::prelude::*;

static LC_ATT: &[u8] = include_bytes!("../assets/lc_att.ckpt");
static BASELINE1: &[u8] = include_bytes!("../assets/baseline1.ckpt");

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Session {
    models: Vec<Checkpoint>,
    features: FeatureConfig,
    audio: Option<AudioClip>,
    spec: Option<Spectrogram>,
    span: (usize, usize),
    scores: Vec<f64>,
}

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Session, JsError> {
        let models = [LC_ATT, BASELINE1]
            .iter()
            .map(|b| Checkpoint::from_bytes(b, None))
            .collect::<Result<Vec<_>, _>>()
            .map_err(js_err)?;
        let features = models[0].features.clone();
        Ok(Session {
            models,
            features,
            audio: None,
            spec: None,
            span: (0, 0),
            scores: Vec::new(),
        })
    }

    /// Tags of the embedded models, in the order `score` indexes them.
    pub fn model_names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.params.variant().tag().to_string()).collect()
    }

    /// Builds a new utterance. `start`/`end` are fractions of its length
    /// delimiting the corrupted part; `noise` picks filtered white (0),
    /// chirp (1) or impulses (2).
    pub fn mix(&mut self, seed: u32, secs: f64, noise: u8, snr_db: f64, start: f64, end: f64) -> Result<(), JsError> {
        let seed = u64::from(seed);
        let kind = *NoiseKind::ALL
            .get(usize::from(noise))
            .ok_or_else(|| js_err(format!("unknown noise kind {noise}")))?;
        let clean = speech_like(seed, secs.clamp(0.5, 6.0)).map_err(js_err)?;
        let noise = synth_noise(kind, seed.wrapping_add(1), 3.0).map_err(js_err)?;
        let geometry = self.features.geometry().map_err(js_err)?;
        let frames = geometry.frame_count(clean.len()).map_err(js_err)?;
        let at = |f: f64| ((f.clamp(0.0, 1.0) * frames as f64) as usize).min(frames - 1);
        let (s, e) = (at(start.min(end)), at(start.max(end)));
        let mixed = mix_at_snr(&clean, &noise, snr_db, Span::Frames { start: s, end: e }, geometry, seed)
            .map_err(js_err)?;
        let (audio, _) = fit_pcm_range(&mixed.clip).map_err(js_err)?;
        self.spec = Some(spectrogram(&audio, &self.features).map_err(js_err)?);
        self.audio = Some(audio);
        self.span = (s, e);
        self.scores.clear();
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.spec.as_ref().map_or(0, Spectrogram::frames)
    }

    pub fn bins(&self) -> usize {
        self.spec.as_ref().map_or(0, Spectrogram::bins)
    }

    /// Frame-major magnitudes of the current utterance.
    pub fn spectrogram(&self) -> Vec<f32> {
        self.spec
            .as_ref()
            .map_or_else(Vec::new, |s| s.as_frame_major().iter().map(|&v| v as f32).collect())
    }

    pub fn samples(&self) -> Vec<f32> {
        self.audio
            .as_ref()
            .map_or_else(Vec::new, |a| a.samples().iter().map(|&v| v as f32).collect())
    }

    pub fn sample_rate(&self) -> u32 {
        self.features.sample_rate
    }

    pub fn span_start(&self) -> usize {
        self.span.0
    }

    pub fn span_end(&self) -> usize {
        self.span.1
    }

    /// Runs model `model` and returns the utterance score; frame scores are
    /// kept for `frame_scores` and `regions`.
    pub fn score(&mut self, model: usize) -> Result<f64, JsError> {
        let spec = self.spec.as_ref().ok_or_else(|| js_err("mix an utterance first"))?;
        let ckpt = self.models.get(model).ok_or_else(|| js_err(format!("no model {model}")))?;
        let out = forward(&ckpt.params, spec).map_err(js_err)?;
        self.scores = out.frame_scores;
        Ok(out.utterance_score)
    }

    pub fn frame_scores(&self) -> Vec<f64> {
        self.scores.clone()
    }

    /// Detected regions as flat inclusive `[start, end, start, end, ...]`.
    pub fn regions(&self, threshold: f64, min_len: usize, smooth: usize) -> Result<Vec<u32>, JsError> {
        Ok(region_bounds(&self.detect(threshold, min_len, smooth)?)
            .into_iter()
            .flat_map(|(s, e)| [s as u32, e as u32])
            .collect())
    }

    /// Overlap of the detected regions with the frames that were corrupted.
    pub fn iou(&self, threshold: f64, min_len: usize, smooth: usize) -> Result<f64, JsError> {
        let found = region_bounds(&self.detect(threshold, min_len, smooth)?);
        Ok(localization_iou(&found, &[self.span]))
    }
}

impl Session {
    fn detect(&self, threshold: f64, min_len: usize, smooth: usize) -> Result<Vec<sqa_core::localize::AnomalyRegion>, JsError> {
        let cfg = LocalizeConfig {
            score_threshold: threshold,
            min_len,
            smooth_window: smooth,
        };
        cfg.validate().map_err(js_err)?;
        Ok(detect_regions(&self.scores, threshold, min_len, smooth))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_models_score_a_mix() {
        let mut s = Session::new().unwrap();
        assert_eq!(s.model_names(), ["LC_ATT", "Baseline1"]);
        s.mix(3, 1.5, 1, 0.0, 0.25, 0.75).unwrap();
        assert_eq!(s.spectrogram().len(), s.frames() * s.bins());
        assert!(s.span_start() < s.span_end());
        for m in 0..2 {
            let u = s.score(m).unwrap();
            assert!(u.is_finite());
            assert_eq!(s.frame_scores().len(), s.frames());
            let r = s.regions(7.1, 3, 5).unwrap();
            assert_eq!(r.len() % 2, 0);
            assert!((0.0..=1.0).contains(&s.iou(7.1, 3, 5).unwrap()));
        }
    }
}
