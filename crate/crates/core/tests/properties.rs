mod common;

use common::{random_tensor, rng};
use proptest::prelude::*;
use sqa_core::corpus::{mix_at_snr, power, pseudo_score, snr_db, SnrLabel, Span};
use sqa_core::localize::{detect_regions, localization_iou, region_bounds, smooth};
use sqa_core::model::{attention_forward, conv1d_forward, AttentionParams, Dims, Layer, ModelParams, Variant};
use sqa_core::signal::{spectrogram, AudioClip, FeatureConfig, FrameGeometry, SAMPLE_RATE};
use sqa_core::tensor::Tensor;

fn attention_params(seed: u64, channels: usize, width: usize) -> AttentionParams {
    let mut r = rng(seed);
    AttentionParams {
        w_frame: random_tensor(&mut r, &[channels, width], 1.5),
        w_context: random_tensor(&mut r, &[channels, width], 1.5),
        bias: random_tensor(&mut r, &[width], 1.0),
        w_score: random_tensor(&mut r, &[1, width], 3.0),
        bias_score: random_tensor(&mut r, &[1], 1.0),
    }
}

/// Maximal runs of `smoothed < thr` with at least `min_len` frames, written
/// with a flag vector instead of a scan.
fn brute_regions(smoothed: &[f64], thr: f64, min_len: usize) -> Vec<(usize, usize)> {
    let flags: Vec<bool> = smoothed.iter().map(|&s| s < thr).collect();
    let mut out = Vec::new();
    for start in 0..flags.len() {
        if !flags[start] || (start > 0 && flags[start - 1]) {
            continue;
        }
        let end = (start..flags.len()).take_while(|&t| flags[t]).last().unwrap();
        if end + 1 - start >= min_len {
            out.push((start, end));
        }
    }
    out
}

fn covered(regions: &[(usize, usize)], n: usize) -> Vec<bool> {
    let mut v = vec![false; n];
    for &(s, e) in regions {
        v[s..=e].iter_mut().for_each(|f| *f = true);
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_weights_are_a_distribution_and_output_stays_in_hull(
        seed in 0u64..10_000, steps in 1usize..12, channels in 1usize..6, width in 1usize..5
    ) {
        let p = attention_params(seed, channels, width);
        let h = random_tensor(&mut rng(seed + 1), &[steps, channels], 2.0);
        let (l, a) = attention_forward(&p, &h).unwrap();
        for t in 0..steps {
            let row = &a.data()[t * steps..(t + 1) * steps];
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&w| w > 0.0));
            for c in 0..channels {
                let col = (0..steps).map(|u| h.data()[u * channels + c]);
                let (lo, hi) = col.fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
                let v = l.data()[t * channels + c];
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn sigmoid_bounded_scores_cap_the_weight_ratio(
        seed in 0u64..10_000, steps in 2usize..12, channels in 1usize..6
    ) {
        let p = attention_params(seed, channels, 3);
        let h = random_tensor(&mut rng(seed + 7), &[steps, channels], 5.0);
        let (_, a) = attention_forward(&p, &h).unwrap();
        for t in 0..steps {
            let row = &a.data()[t * steps..(t + 1) * steps];
            let (lo, hi) = row.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &w| (lo.min(w), hi.max(w)));
            prop_assert!(hi / lo <= std::f64::consts::E + 1e-9);
        }
    }

    #[test]
    fn conv_commutes_with_a_time_shift(
        seed in 0u64..10_000, steps in 1usize..10, channels in 1usize..5, kernels in 1usize..5
    ) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, &[steps, channels], 1.0);
        let kernel = random_tensor(&mut r, &[kernels, channels, 3], 1.0);
        let bias = random_tensor(&mut r, &[kernels], 1.0);
        let mut shifted = vec![0.0; channels];
        shifted.extend_from_slice(x.data());
        let xs = Tensor::new(vec![steps + 1, channels], shifted).unwrap();
        let y = conv1d_forward(&x, &kernel, &bias).unwrap();
        let ys = conv1d_forward(&xs, &kernel, &bias).unwrap();
        prop_assert_eq!(&ys.data()[kernels..], y.data());
    }

    #[test]
    fn parameter_counts_follow_the_layer_formulas(
        input in 1usize..40, hidden in 1usize..20, kernels in 1usize..30, width in 1usize..10, dense in 1usize..20
    ) {
        let dims = Dims { input, lstm_hidden: hidden, conv_kernels: kernels, attention_width: width, dense };
        for variant in Variant::ALL {
            let p = ModelParams::init(variant, dims, 0);
            let c = p.count();
            let blstm = 2 * (4 * hidden * input + 4 * hidden * hidden + 4 * hidden);
            let mut channels = 2 * hidden;
            let mut total = blstm;
            prop_assert_eq!(c.layer(Layer::Blstm), Some(blstm));
            if variant.has_conv() {
                let conv = kernels * channels * 3 + kernels;
                prop_assert_eq!(c.layer(Layer::Conv), Some(conv));
                channels = kernels;
                total += conv;
            } else {
                prop_assert_eq!(c.layer(Layer::Conv), None);
            }
            if variant.has_attention() {
                let att = 2 * channels * width + width + width + 1;
                prop_assert_eq!(c.layer(Layer::Attention), Some(att));
                total += att;
            }
            total += channels * dense + dense + dense + 1;
            prop_assert_eq!(c.total, total);
            prop_assert_eq!(c.total, p.tensors().iter().map(|t| t.len()).sum::<usize>());
        }
    }

    #[test]
    fn spectrogram_shape_and_determinism(n in 512usize..6000, seed in 0u64..1000, log in any::<bool>()) {
        let mut r = rng(seed);
        let samples = random_tensor(&mut r, &[n], 0.5).data().to_vec();
        let clip = AudioClip::new(samples, SAMPLE_RATE).unwrap();
        let cfg = FeatureConfig { log_compress: log, ..FeatureConfig::default() };
        let a = spectrogram(&clip, &cfg).unwrap();
        prop_assert_eq!(a.bins(), 257);
        prop_assert_eq!(a.frames(), (n - 512) / 256 + 1);
        prop_assert!(a.as_frame_major().iter().all(|v| *v >= 0.0 && v.is_finite()));
        let b = spectrogram(&clip, &cfg).unwrap();
        prop_assert_eq!(a.as_frame_major(), b.as_frame_major());
    }

    #[test]
    fn regions_match_a_brute_force_scan(
        scores in prop::collection::vec(1.0f64..8.0, 0..80),
        thr in 1.0f64..8.0, min_len in 1usize..6, half in 0usize..4
    ) {
        let window = 2 * half + 1;
        let regions = region_bounds(&detect_regions(&scores, thr, min_len, window));
        prop_assert_eq!(&regions, &brute_regions(&smooth(&scores, window), thr, min_len));
        for w in regions.windows(2) {
            prop_assert!(w[0].1 + 1 < w[1].0);
        }
    }

    #[test]
    fn a_higher_threshold_never_uncovers_frames(
        scores in prop::collection::vec(1.0f64..8.0, 1..80),
        lo in 1.0f64..8.0, delta in 0.0f64..3.0, min_len in 1usize..6
    ) {
        let n = scores.len();
        let a = covered(&region_bounds(&detect_regions(&scores, lo, min_len, 3)), n);
        let b = covered(&region_bounds(&detect_regions(&scores, lo + delta, min_len, 3)), n);
        prop_assert!(a.iter().zip(&b).all(|(x, y)| !x || *y));
    }

    #[test]
    fn unit_window_smoothing_is_identity(scores in prop::collection::vec(-10.0f64..10.0, 0..50)) {
        prop_assert_eq!(smooth(&scores, 1), scores);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(
        a in prop::collection::vec((0usize..50, 0usize..10), 0..5),
        b in prop::collection::vec((0usize..50, 0usize..10), 0..5)
    ) {
        let a: Vec<_> = a.into_iter().map(|(s, l)| (s, s + l)).collect();
        let b: Vec<_> = b.into_iter().map(|(s, l)| (s, s + l)).collect();
        let x = localization_iou(&a, &b);
        prop_assert_eq!(x, localization_iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(localization_iou(&a, &a), 1.0);
        // oracle over frame sets
        let (ca, cb) = (covered(&a, 70), covered(&b, 70));
        let inter = ca.iter().zip(&cb).filter(|(p, q)| **p && **q).count();
        let union = ca.iter().zip(&cb).filter(|(p, q)| **p || **q).count();
        let want = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        prop_assert!((x - want).abs() < 1e-15);
    }

    #[test]
    fn mixing_hits_the_requested_snr_inside_the_span_only(
        seed in 0u64..10_000, snr in -15.0f64..30.0, n in 2000usize..12_000, a in 0.0f64..1.0, b in 0.0f64..1.0
    ) {
        let g = FrameGeometry::new(512, 256).unwrap();
        let mut r = rng(seed);
        let clean = AudioClip::new(random_tensor(&mut r, &[n], 0.3).data().to_vec(), SAMPLE_RATE).unwrap();
        let noise = AudioClip::new(random_tensor(&mut r, &[777], 0.5).data().to_vec(), SAMPLE_RATE).unwrap();
        let frames = g.frame_count(n).unwrap();
        let at = |f: f64| ((f * frames as f64) as usize).min(frames - 1);
        let span = Span::Frames { start: at(a.min(b)), end: at(a.max(b)) };
        let mixed = mix_at_snr(&clean, &noise, snr, span, g, seed).unwrap();
        let range = span.sample_range(n, g).unwrap();
        let added: Vec<f64> = range.clone().map(|i| mixed.clip.samples()[i] - clean.samples()[i]).collect();
        let measured = snr_db(power(&clean.samples()[range.clone()]), power(&added));
        prop_assert!((measured - snr).abs() < 1e-6);
        for i in (0..n).filter(|i| !range.contains(i)) {
            prop_assert_eq!(mixed.clip.samples()[i].to_bits(), clean.samples()[i].to_bits());
        }
    }

    #[test]
    fn pseudo_score_is_monotone_and_bounded(a in -40.0f64..60.0, b in -40.0f64..60.0) {
        let (lo, hi) = (a.min(b), a.max(b));
        let (sl, sh) = (pseudo_score(SnrLabel::Db(lo)), pseudo_score(SnrLabel::Db(hi)));
        prop_assert!(sl <= sh);
        prop_assert!((1.0..=7.0).contains(&sl) && (1.0..=7.0).contains(&sh));
        prop_assert!(sh < pseudo_score(SnrLabel::Clean));
    }
}

#[test]
fn pseudo_score_grid_and_midpoints() {
    let table = [(-10.0, 1.0), (-5.0, 2.0), (0.0, 3.0), (5.0, 4.0), (10.0, 5.0), (15.0, 6.0), (20.0, 7.0)];
    for (db, score) in table {
        assert_eq!(pseudo_score(SnrLabel::Db(db)), score, "{db} dB");
    }
    assert_eq!(pseudo_score(SnrLabel::Clean), 8.0);
    assert_eq!(pseudo_score(SnrLabel::Db(-30.0)), 1.0);
    assert_eq!(pseudo_score(SnrLabel::Db(40.0)), 7.0);
}
