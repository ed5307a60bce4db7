use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sqa_core::corpus::{LabeledUtterance, Manifest, ManifestHeader, MixRecipe, SnrLabel, Span};
use sqa_core::model::{forward, load_checkpoint, save_checkpoint, Checkpoint, Dims, ModelParams, Variant};
use sqa_core::signal::{spectrogram, AudioClip, FeatureConfig, SAMPLE_RATE};
use sqa_core::wav::{read_wav, write_wav};

fn sqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sqa(args);
    assert!(
        out.status.success(),
        "sqa {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synthetic_mix_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["mix", "--synthetic", "--n", "5", "--seed", "7", "--localize-set", "--out", s(out)]);
    }
    for name in ["train.jsonl", "test.jsonl", "localize.jsonl"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let m = Manifest::load(a.join("train.jsonl")).unwrap();
    assert_eq!(m.records.len(), 30);
    for r in &m.records {
        assert_eq!(fs::read(m.resolve(r)).unwrap(), fs::read(b.join(&r.path)).unwrap());
    }
    let other = dir.path().join("c");
    ok(&["mix", "--synthetic", "--n", "5", "--seed", "8", "--out", s(&other)]);
    assert_ne!(fs::read(a.join("train.jsonl")).unwrap(), fs::read(other.join("train.jsonl")).unwrap());
}

/// Baseline1 with zero biases maps a silent input to exactly the frame-score
/// bias (every LSTM state stays 0), and negative output weights keep any
/// other input below it.
fn constructed_checkpoint() -> Checkpoint {
    let mut params = ModelParams::init(Variant::Baseline1, Dims::REDUCED, 5);
    let names: Vec<&str> = params.specs().iter().map(|s| s.name).collect();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        let data = t.data_mut();
        match *name {
            n if n.ends_with("bias") && n != "frame_score.bias" => data.fill(0.0),
            "frame_score.bias" => data[0] = 8.0,
            "frame_score.weight" => data.iter_mut().for_each(|v| *v = -v.abs() * 0.5),
            _ => {}
        }
    }
    params.round_to_f32();
    Checkpoint::new(
        params,
        FeatureConfig {
            log_compress: true,
            ..FeatureConfig::default()
        },
    )
}

fn record(id: &str, snr: SnrLabel, target: f64) -> LabeledUtterance {
    LabeledUtterance {
        id: id.into(),
        path: format!("{id}.wav"),
        recipe: MixRecipe {
            clean_id: id.into(),
            noise_id: None,
            snr_db: snr,
            span: Span::Full,
            seed: 0,
        },
        target_score: target,
        gain: None,
        noise_offset: None,
        rescale: 1.0,
    }
}

#[test]
fn eval_of_a_perfect_predictor() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt_path = dir.path().join("model.ckpt");
    save_checkpoint(&ckpt_path, &constructed_checkpoint()).unwrap();
    let ckpt = load_checkpoint(&ckpt_path, None).unwrap();

    let mut records = Vec::new();
    for i in 0..3 {
        let id = format!("silent{i}");
        write_wav(dir.path().join(format!("{id}.wav")), &AudioClip::new(vec![0.0; 8000 + 1000 * i], SAMPLE_RATE).unwrap())
            .unwrap();
        records.push(record(&id, SnrLabel::Clean, 8.0));
    }
    for i in 0..6 {
        let id = format!("tone{i}");
        let freq = 200.0 + 350.0 * i as f64;
        let amp = 0.01 * (i + 1) as f64;
        let samples = (0..12_000)
            .map(|n| amp * (2.0 * std::f64::consts::PI * freq * n as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        let path = dir.path().join(format!("{id}.wav"));
        write_wav(&path, &AudioClip::new(samples, SAMPLE_RATE).unwrap()).unwrap();
        // the target is whatever the model says about the file as read back
        let spec = spectrogram(&read_wav(&path).unwrap(), &ckpt.features).unwrap();
        let predicted = forward(&ckpt.params, &spec).unwrap().utterance_score;
        assert!((1.0..8.0).contains(&predicted), "{predicted}");
        records.push(record(&id, SnrLabel::Db(i as f64), predicted));
    }
    let manifest = Manifest {
        header: ManifestHeader::new("test", SAMPLE_RATE, 0),
        records,
        base_dir: dir.path().to_path_buf(),
    };
    let manifest_path = dir.path().join("test.jsonl");
    manifest.save(&manifest_path).unwrap();

    let report = dir.path().join("report.jsonl");
    let stdout = ok(&[
        "eval",
        "--manifest",
        s(&manifest_path),
        "--checkpoint",
        s(&ckpt_path),
        "--threshold",
        "7.99",
        "--label",
        "perfect",
        "--report",
        s(&report),
    ]);
    let row = stdout.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cols, ["perfect", "1.000", "1.000", "1.000", "1.000", "1.000"], "{stdout}");
    let text = fs::read_to_string(&report).unwrap();
    let summary: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(summary["f1"], 1.0);
    assert!((summary["lcc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(text.lines().count(), 10);
}

fn mean_score(rows: &[serde_json::Value], pick: impl Fn(&str) -> bool) -> f64 {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| pick(r["id"].as_str().unwrap()))
        .map(|r| r["predicted"].as_f64().unwrap())
        .collect();
    assert!(!v.is_empty());
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn train_score_localize_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    ok(&["mix", "--synthetic", "--n", "15", "--seed", "3", "--localize-set", "--out", s(&data)]);
    let stdout = ok(&[
        "train",
        "--manifest",
        s(&data.join("train.jsonl")),
        "--variant",
        "Baseline1",
        "--desk",
        "--epochs",
        "8",
        "--seed",
        "3",
        "--val-fraction",
        "0.2",
        "--out-dir",
        s(&run),
    ]);
    assert!(stdout.contains("after 8 epochs"), "{stdout}");
    assert_eq!(fs::read_to_string(run.join("train_log.jsonl")).unwrap().lines().count(), 8);
    let ckpt = run.join("final.ckpt");

    let report = dir.path().join("report.jsonl");
    ok(&[
        "eval",
        "--manifest",
        s(&data.join("test.jsonl")),
        "--checkpoint",
        s(&ckpt),
        "--fit-threshold",
        s(&data.join("train.jsonl")),
        "--report",
        s(&report),
    ]);
    let rows: Vec<serde_json::Value> = fs::read_to_string(&report)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let clean = mean_score(&rows, |id| id.ends_with("_clean"));
    let worst = mean_score(&rows, |id| id.ends_with("_snr-10"));
    assert!((clean - 8.0).abs() < (worst - 8.0).abs(), "clean {clean}, -10 dB {worst}");

    let wav = data.join("test").join(format!("{}.wav", rows[0]["id"].as_str().unwrap()));
    let frames = dir.path().join("frames.csv");
    let stdout = ok(&["score", "--wav", s(&wav), "--checkpoint", s(&ckpt), "--frames-csv", s(&frames)]);
    assert!(stdout.contains("Baseline1 model"), "{stdout}");
    assert!(fs::read_to_string(&frames).unwrap().starts_with("frame_index,time_seconds,score\n"));

    let m = Manifest::load(data.join("localize.jsonl")).unwrap();
    let csv = dir.path().join("loc.csv");
    let stdout = ok(&[
        "localize",
        "--wav",
        s(&m.resolve(&m.records[0])),
        "--checkpoint",
        s(&ckpt),
        "--threshold",
        "7.5",
        "--csv",
        s(&csv),
    ]);
    assert!(stdout.contains("threshold 7.500"), "{stdout}");
    let csv = fs::read_to_string(&csv).unwrap();
    assert!(csv.starts_with("frame_index,time_seconds,score,smoothed_score,anomalous_flag\n"));
}

#[test]
fn spectrogram_dump() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("x.wav");
    write_wav(&wav, &AudioClip::new(vec![0.1; 512 + 256 * 3], SAMPLE_RATE).unwrap()).unwrap();
    let out = dir.path().join("spec.csv");
    let stdout = ok(&["spectrogram", "--wav", s(&wav), "--out", s(&out), "--log"]);
    assert!(stdout.starts_with("257 bins x 4 frames"), "{stdout}");
}

fn assert_one_line_error(out: &Output) {
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn bad_invocations_fail_with_one_line() {
    let missing: PathBuf = ["no", "such", "file.wav"].iter().collect();
    assert_one_line_error(&sqa(&["score", "--wav", s(&missing), "--checkpoint", "x.ckpt"]));
    assert_one_line_error(&sqa(&["eval", "--manifest", "missing.jsonl", "--checkpoint", "x.ckpt"]));

    let out = sqa(&["train", "--no-such-flag"]);
    assert_one_line_error(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--no-such-flag"));
    assert_one_line_error(&sqa(&["mix", "--synthetic", "--out"]));
    assert!(sqa(&["--help"]).status.success());
}
