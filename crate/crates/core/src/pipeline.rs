//! Glue between corpora on disk, feature extraction, training and reports.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::corpus::{GeneratedUtterance, LabeledUtterance, Manifest, ManifestHeader, NamedClip, Span};
use crate::error::{io_err, Error, Result};
use crate::metrics::EvalReport;
use crate::model::{input_tensor, save_checkpoint, Checkpoint, ModelParams};
use crate::signal::{spectrogram, AudioClip, FeatureConfig};
use crate::train::{predict, train, EpochRecord, Example, TrainOutcome};
use crate::util::par_map;
use crate::wav::read_wav;

pub fn features(clip: &AudioClip, config: &FeatureConfig) -> Result<crate::tensor::Tensor> {
    Ok(input_tensor(&spectrogram(clip, config)?))
}

fn example(id: &str, clip: &AudioClip, target: f64, config: &FeatureConfig) -> Result<Example> {
    let input = features(clip, config).map_err(|e| Error::Training {
        id: id.to_string(),
        source: Box::new(e),
    })?;
    Ok(Example {
        id: id.to_string(),
        input,
        target,
    })
}

fn reject_partial(r: &LabeledUtterance) -> Result<()> {
    if r.recipe.span != Span::Full {
        return Err(Error::Corpus(format!(
            "utterance {:?} is only partly corrupted; its single label does not describe every frame",
            r.id
        )));
    }
    Ok(())
}

/// Examples from in-memory utterances. With `training` set, partially
/// corrupted utterances are refused.
pub fn examples_from_generated(
    utterances: &[GeneratedUtterance],
    config: &FeatureConfig,
    training: bool,
) -> Result<Vec<Example>> {
    if training {
        utterances.iter().try_for_each(|u| reject_partial(&u.record))?;
    }
    par_map(utterances, |u| example(&u.record.id, &u.audio, u.record.target_score, config))
        .into_iter()
        .collect()
}

/// Reads and featurizes every utterance a manifest lists.
pub fn load_examples(manifest: &Manifest, config: &FeatureConfig, training: bool) -> Result<Vec<Example>> {
    if training {
        manifest.records.iter().try_for_each(reject_partial)?;
    }
    if manifest.header.sample_rate != config.sample_rate {
        return Err(Error::Manifest(format!(
            "manifest is at {} Hz, features expect {} Hz",
            manifest.header.sample_rate, config.sample_rate
        )));
    }
    par_map(&manifest.records, |r| {
        let clip = read_wav(manifest.resolve(r)).map_err(|e| Error::Training {
            id: r.id.clone(),
            source: Box::new(e),
        })?;
        example(&r.id, &clip, r.target_score, config)
    })
    .into_iter()
    .collect()
}

/// Every `.wav` directly inside `dir`, sorted by name, with the file stem as id.
pub fn read_clip_dir(dir: &Path) -> Result<Vec<NamedClip>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Corpus(format!("no .wav files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            Ok(NamedClip {
                id: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                clip: read_wav(p)?,
            })
        })
        .collect()
}

/// Writes audio under `dir/<split>/` and the manifest to `dir/<split>.jsonl`.
pub fn write_split(
    dir: &Path,
    split: &str,
    utterances: &[GeneratedUtterance],
    seed: u64,
    run: &RunConfig,
) -> Result<PathBuf> {
    crate::corpus::write_audio(dir, utterances)?;
    let mut header = ManifestHeader::new(split, run.features.sample_rate, seed);
    header.run = run.to_value();
    let manifest = Manifest {
        header,
        records: utterances.iter().map(|u| u.record.clone()).collect(),
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join(format!("{split}.jsonl"));
    manifest.save(&path)?;
    Ok(path)
}

/// Splits records into (train, validation) by clean source, so no clean
/// recording contributes to both sides.
pub fn split_by_source(
    records: &[LabeledUtterance],
    fraction: f64,
    seed: u64,
) -> (Vec<LabeledUtterance>, Vec<LabeledUtterance>) {
    let sources: BTreeSet<&str> = records.iter().map(|r| r.recipe.clean_id.as_str()).collect();
    let mut sources: Vec<&str> = sources.into_iter().collect();
    sources.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((sources.len() as f64) * fraction).round() as usize;
    let val: BTreeSet<&str> = sources[..n_val.min(sources.len())].iter().copied().collect();
    records
        .iter()
        .cloned()
        .partition(|r| !val.contains(r.recipe.clean_id.as_str()))
}

pub fn evaluate(params: &ModelParams, examples: &[Example], threshold: f64) -> Result<EvalReport> {
    let outputs = predict(params, examples)?;
    EvalReport::from_predictions(
        examples
            .iter()
            .zip(&outputs)
            .map(|(e, o)| (e.id.clone(), e.target, o.utterance_score)),
        threshold,
    )
}

/// Trains per `run.train` and writes `final.ckpt`, `best.ckpt` and
/// `train_log.jsonl` into `out_dir`.
pub fn train_to_dir(
    out_dir: &Path,
    examples: &[Example],
    validation: Option<&[Example]>,
    run: &RunConfig,
) -> Result<TrainOutcome> {
    run.validate()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let log_path = out_dir.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?);
    let mut write_err = None;
    let outcome = train(examples, validation, &run.train, |r: &EpochRecord| {
        let line = serde_json::to_string(r).expect("epoch record serializes");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_err(&log_path)(e));
    }
    for (name, params) in [("final.ckpt", &outcome.final_params), ("best.ckpt", &outcome.best_params)] {
        let mut ckpt = Checkpoint::new(params.clone(), run.features.clone());
        ckpt.run = run.to_value();
        save_checkpoint(out_dir.join(name), &ckpt)?;
    }
    Ok(outcome)
}
