use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sqa_core::config::RunConfig;
use sqa_core::corpus::{build_corpus, partial_span_set, synth_corpus, Manifest, SynthConfig};
use sqa_core::localize::{detect_with, frames_csv, LocalizeConfig};
use sqa_core::metrics::threshold_from_train;
use sqa_core::model::{forward, load_checkpoint, Checkpoint, Dims, Variant};
use sqa_core::pipeline::{evaluate, load_examples, read_clip_dir, split_by_source, train_to_dir, write_split};
use sqa_core::signal::spectrogram;
use sqa_core::train::predict;
use sqa_core::wav::read_wav;

#[derive(Parser)]
#[command(name = "sqa", version, about = "Frame-level audio quality assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build train/test manifests by mixing clean audio with noise at fixed SNRs
    Mix(MixArgs),
    /// Train a model on a training manifest
    Train(TrainArgs),
    /// Score one recording
    Score(ScoreArgs),
    /// Find low-quality regions in one recording
    Localize(LocalizeArgs),
    /// Evaluate a checkpoint on a manifest
    Eval(EvalArgs),
    /// Dump the magnitude spectrogram of a recording as CSV (rows are bins)
    Spectrogram(SpectrogramArgs),
}

#[derive(Args)]
struct MixArgs {
    /// Directory of clean training recordings (16 kHz mono 16-bit WAV)
    #[arg(long, required_unless_present = "synthetic")]
    clean_dir: Option<PathBuf>,
    /// Directory of clean test recordings
    #[arg(long, required_unless_present = "synthetic")]
    test_clean_dir: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    noise_dir: Option<PathBuf>,
    /// Generate speech-like and noise recordings instead of reading directories
    #[arg(long, conflicts_with_all = ["clean_dir", "test_clean_dir", "noise_dir"])]
    synthetic: bool,
    /// Number of synthetic clean training recordings (test gets a fifth as many)
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-10,-5,5,10,20")]
    snr_grid: Vec<f64>,
    /// Also write a set of partially corrupted test utterances for localization
    #[arg(long)]
    localize_set: bool,
    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    localize_snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "LC_ATT")]
    variant: Variant,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    /// Desk-scale settings: reduced widths and log-compressed features
    #[arg(long)]
    desk: bool,
    /// Fraction of clean sources held out for best-checkpoint selection
    #[arg(long, default_value_t = 0.0)]
    val_fraction: f64,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    wav: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Write per-frame scores here
    #[arg(long)]
    frames_csv: Option<PathBuf>,
}

#[derive(Args)]
struct LocalizeArgs {
    #[arg(long)]
    wav: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Score below which a frame counts as anomalous [default: the checkpoint's threshold]
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 3)]
    min_len: usize,
    #[arg(long, default_value_t = 5)]
    smooth: usize,
    /// Per-frame CSV destination
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, conflicts_with = "fit_threshold")]
    threshold: Option<f64>,
    /// Fit the clean/noisy threshold on this (training) manifest
    #[arg(long, value_name = "TRAIN_MANIFEST")]
    fit_threshold: Option<PathBuf>,
    /// Machine-readable report (JSON Lines: summary, then one row per utterance)
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "LC_ATT")]
    label: String,
}

#[derive(Args)]
struct SpectrogramArgs {
    #[arg(long)]
    wav: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.render().to_string();
            eprintln!("{} (see --help)", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Mix(a) => mix(a),
        Command::Train(a) => train(a),
        Command::Score(a) => score(a),
        Command::Localize(a) => localize(a),
        Command::Eval(a) => eval(a),
        Command::Spectrogram(a) => dump_spectrogram(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn mix(a: MixArgs) -> Result<()> {
    let mut run = RunConfig {
        snr_grid: a.snr_grid.clone(),
        seed: a.seed,
        ..RunConfig::default()
    };
    let geometry = run.features.geometry()?;
    let (train_clean, test_clean, noise) = if a.synthetic {
        run.paths.insert("source".into(), format!("synthetic:{}", a.n));
        synth_corpus(&SynthConfig::with_train_size(a.n, a.seed))?
    } else {
        let dir = |p: &Option<PathBuf>| p.clone().expect("required by clap");
        let (c, t, n) = (dir(&a.clean_dir), dir(&a.test_clean_dir), dir(&a.noise_dir));
        for (k, p) in [("clean_dir", &c), ("test_clean_dir", &t), ("noise_dir", &n)] {
            run.paths.insert(k.into(), p.display().to_string());
        }
        (read_clip_dir(&c)?, read_clip_dir(&t)?, read_clip_dir(&n)?)
    };
    let corpus = build_corpus(&train_clean, &test_clean, &noise, &a.snr_grid, a.seed, geometry)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let train = write_split(&a.out, "train", &corpus.train, a.seed, &run)?;
    let test = write_split(&a.out, "test", &corpus.test, a.seed, &run)?;
    println!("train: {} utterances -> {}", corpus.train.len(), train.display());
    println!("test:  {} utterances -> {}", corpus.test.len(), test.display());
    if a.localize_set {
        let set = partial_span_set(&test_clean, &noise, a.localize_snr, a.seed, geometry)?;
        let path = write_split(&a.out, "localize", &set, a.seed, &run)?;
        println!("localize: {} utterances -> {}", set.len(), path.display());
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut run = if a.desk {
        RunConfig::desk(a.variant, a.seed)
    } else {
        let mut r = RunConfig::default();
        r.train.variant = a.variant;
        r.train.dims = Dims::FULL;
        r.train.seed = a.seed;
        r.seed = a.seed;
        r
    };
    if let Some(e) = a.epochs {
        run.train.epochs = e;
    }
    if let Some(lr) = a.lr {
        run.train.initial_lr = lr;
    }
    if let Some(d) = a.lr_decay {
        run.train.lr_decay = d;
    }
    if !(0.0..1.0).contains(&a.val_fraction) {
        bail!("--val-fraction must lie in [0, 1)");
    }
    run.paths.insert("manifest".into(), a.manifest.display().to_string());
    run.paths.insert("out_dir".into(), a.out_dir.display().to_string());
    run.validate()?;
    let mut manifest = Manifest::load(&a.manifest)?;
    let (train_records, val_records) = split_by_source(&manifest.records, a.val_fraction, a.seed);
    manifest.records = train_records;
    let examples = load_examples(&manifest, &run.features, true)?;
    manifest.records = val_records;
    let validation = load_examples(&manifest, &run.features, true)?;
    log::info!(
        "training {} on {} utterances ({} held out), {} epochs",
        run.train.variant,
        examples.len(),
        validation.len(),
        run.train.epochs
    );
    let val = (!validation.is_empty()).then_some(validation.as_slice());
    let outcome = train_to_dir(&a.out_dir, &examples, val, &run)?;
    let last = outcome.log.last().expect("at least one epoch");
    println!(
        "final train loss {:.5} after {} epochs; best epoch {}",
        last.mean_train_loss,
        outcome.log.len(),
        outcome.best_epoch
    );
    println!("checkpoints written to {}", a.out_dir.display());
    Ok(())
}

fn load_scored(wav: &Path, checkpoint: &Path) -> Result<(Checkpoint, sqa_core::signal::Spectrogram, sqa_core::model::ScoreOutput)> {
    let ckpt = load_checkpoint(checkpoint, None)?;
    let clip = read_wav(wav)?;
    let spec = spectrogram(&clip, &ckpt.features)?;
    let out = forward(&ckpt.params, &spec)?;
    Ok((ckpt, spec, out))
}

fn checkpoint_threshold(ckpt: &Checkpoint) -> f64 {
    ckpt.run
        .get("threshold")
        .and_then(serde_json::Value::as_f64)
        .unwrap_or(sqa_core::metrics::DEFAULT_THRESHOLD)
}

fn score(a: ScoreArgs) -> Result<()> {
    let (ckpt, spec, out) = load_scored(&a.wav, &a.checkpoint)?;
    println!(
        "{}: {:.3} ({} model, {} frames)",
        a.wav.display(),
        out.utterance_score,
        ckpt.params.variant(),
        out.frame_scores.len()
    );
    if let Some(path) = a.frames_csv {
        let mut s = String::from("frame_index,time_seconds,score\n");
        for (t, v) in out.frame_scores.iter().enumerate() {
            s.push_str(&format!("{t},{:.4},{v:.6}\n", spec.frame_time_secs(t)));
        }
        fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn localize(a: LocalizeArgs) -> Result<()> {
    let (ckpt, spec, out) = load_scored(&a.wav, &a.checkpoint)?;
    let config = LocalizeConfig {
        score_threshold: a.threshold.unwrap_or_else(|| checkpoint_threshold(&ckpt)),
        min_len: a.min_len,
        smooth_window: a.smooth,
    };
    let regions = detect_with(&out.frame_scores, &config)?;
    if let Some(path) = &a.csv {
        let csv = frames_csv(&out.frame_scores, &config, |t| spec.frame_time_secs(t))?;
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "{}: utterance score {:.3}, threshold {:.3}, {} region(s)",
        a.wav.display(),
        out.utterance_score,
        config.score_threshold,
        regions.len()
    );
    for r in &regions {
        println!(
            "  frames {:>4}-{:<4} {:.3}s-{:.3}s  mean score {:.3}",
            r.start_frame,
            r.end_frame,
            spec.frame_time_secs(r.start_frame),
            spec.frame_time_secs(r.end_frame) + spec.frame_length_samples as f64 / spec.sample_rate as f64,
            r.mean_frame_score
        );
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint, None)?;
    let manifest = Manifest::load(&a.manifest)?;
    let examples = load_examples(&manifest, &ckpt.features, false)?;
    let threshold = match (&a.threshold, &a.fit_threshold) {
        (Some(t), _) => *t,
        (None, Some(path)) => {
            let fit = Manifest::load(path)?;
            let fit_examples = load_examples(&fit, &ckpt.features, false)?;
            let scores: Vec<f64> = predict(&ckpt.params, &fit_examples)?
                .iter()
                .map(|o| o.utterance_score)
                .collect();
            let clean: Vec<bool> = fit.records.iter().map(|r| r.is_clean()).collect();
            threshold_from_train(&scores, &clean)?
        }
        (None, None) => checkpoint_threshold(&ckpt),
    };
    let report = evaluate(&ckpt.params, &examples, threshold)?;
    println!("{}", report.table(&a.label));
    if let Some(path) = a.report {
        let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let summary = serde_json::json!({
            "label": a.label,
            "variant": ckpt.params.variant(),
            "manifest": a.manifest.display().to_string(),
            "lcc": report.lcc,
            "srcc": report.srcc,
            "precision": report.precision,
            "recall": report.recall,
            "f1": report.f1,
            "threshold": report.threshold,
            "utterances": report.rows.len(),
            "run": ckpt.run,
        });
        writeln!(f, "{summary}")?;
        for row in &report.rows {
            writeln!(f, "{}", serde_json::to_string(row)?)?;
        }
    }
    Ok(())
}

fn dump_spectrogram(a: SpectrogramArgs) -> Result<()> {
    let clip = read_wav(&a.wav)?;
    let config = sqa_core::signal::FeatureConfig {
        log_compress: a.log,
        ..Default::default()
    };
    let spec = spectrogram(&clip, &config)?;
    fs::write(&a.out, spec.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{} bins x {} frames -> {}", spec.bins(), spec.frames(), a.out.display());
    Ok(())
}
