//! Anomaly regions from frame-score curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DEFAULT_THRESHOLD;

/// Inclusive frame interval whose smoothed scores fell below the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRegion {
    pub start_frame: usize,
    pub end_frame: usize,
    pub mean_frame_score: f64,
}

impl AnomalyRegion {
    pub fn frame_count(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeConfig {
    pub score_threshold: f64,
    pub min_len: usize,
    pub smooth_window: usize,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            score_threshold: DEFAULT_THRESHOLD,
            min_len: 3,
            smooth_window: 5,
        }
    }
}

impl LocalizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_len == 0 {
            return Err(Error::Config("min_len must be at least 1".into()));
        }
        if self.smooth_window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "smooth window must be odd, got {}",
                self.smooth_window
            )));
        }
        if !self.score_threshold.is_finite() {
            return Err(Error::Config("score threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Centered moving average; near the edges the window shrinks to the frames
/// that exist.
pub fn smooth(scores: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let mut prefix = Vec::with_capacity(scores.len() + 1);
    prefix.push(0.0);
    for s in scores {
        prefix.push(prefix.last().unwrap() + s);
    }
    (0..scores.len())
        .map(|t| {
            if window <= 1 {
                return scores[t];
            }
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(scores.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Maximal runs of smoothed score below `score_threshold` lasting at least
/// `min_len` frames. The region's mean is over the raw scores.
///
/// Panics if `min_len` is 0 or `smooth_window` is even; use
/// [`LocalizeConfig::validate`] for user input.
pub fn detect_regions(
    frame_scores: &[f64],
    score_threshold: f64,
    min_len: usize,
    smooth_window: usize,
) -> Vec<AnomalyRegion> {
    assert!(min_len >= 1, "min_len must be at least 1");
    assert!(smooth_window % 2 == 1, "smooth window must be odd");
    let smoothed = smooth(frame_scores, smooth_window);
    let mut regions = Vec::new();
    let mut t = 0;
    while t < smoothed.len() {
        if smoothed[t] >= score_threshold {
            t += 1;
            continue;
        }
        let start = t;
        while t < smoothed.len() && smoothed[t] < score_threshold {
            t += 1;
        }
        if t - start >= min_len {
            let slice = &frame_scores[start..t];
            regions.push(AnomalyRegion {
                start_frame: start,
                end_frame: t - 1,
                mean_frame_score: slice.iter().sum::<f64>() / slice.len() as f64,
            });
        }
    }
    regions
}

pub fn detect_with(frame_scores: &[f64], config: &LocalizeConfig) -> Result<Vec<AnomalyRegion>> {
    config.validate()?;
    Ok(detect_regions(
        frame_scores,
        config.score_threshold,
        config.min_len,
        config.smooth_window,
    ))
}

fn merged(regions: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = regions.to_vec();
    v.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (s, e) in v {
        match out.last_mut() {
            Some(last) if s <= last.1 + 1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn total(intervals: &[(usize, usize)]) -> usize {
    intervals.iter().map(|(s, e)| e - s + 1).sum()
}

/// Intersection over union of the frame sets covered by two lists of
/// inclusive intervals. Two empty sets score 1.
pub fn localization_iou(predicted: &[(usize, usize)], truth: &[(usize, usize)]) -> f64 {
    let a = merged(predicted);
    let b = merged(truth);
    let (mut i, mut j, mut inter) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            inter += hi - lo + 1;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    let union = total(&a) + total(&b) - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn region_bounds(regions: &[AnomalyRegion]) -> Vec<(usize, usize)> {
    regions.iter().map(|r| (r.start_frame, r.end_frame)).collect()
}

/// Per-frame CSV: frame_index, time_seconds, score, smoothed_score, anomalous_flag.
pub fn frames_csv(
    frame_scores: &[f64],
    config: &LocalizeConfig,
    frame_time_secs: impl Fn(usize) -> f64,
) -> Result<String> {
    let regions = detect_with(frame_scores, config)?;
    let smoothed = smooth(frame_scores, config.smooth_window);
    let mut flags = vec![false; frame_scores.len()];
    for r in &regions {
        flags[r.start_frame..=r.end_frame].fill(true);
    }
    let mut s = String::from("frame_index,time_seconds,score,smoothed_score,anomalous_flag\n");
    for t in 0..frame_scores.len() {
        writeln!(
            s,
            "{t},{:.4},{:.6},{:.6},{}",
            frame_time_secs(t),
            frame_scores[t],
            smoothed[t],
            u8::from(flags[t])
        )
        .unwrap();
    }
    Ok(s)
}
