use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LabeledUtterance;
use crate::error::{io_err, Error, Result};

pub const MANIFEST_SCHEMA: &str = "sqa-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// First line of a manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema: String,
    pub version: u32,
    pub split: String,
    pub sample_rate: u32,
    pub scoring_scale: String,
    pub seed: u64,
    #[serde(default)]
    pub run: serde_json::Value,
}

impl ManifestHeader {
    pub fn new(split: &str, sample_rate: u32, seed: u64) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.to_string(),
            version: MANIFEST_VERSION,
            split: split.to_string(),
            sample_rate,
            scoring_scale: crate::model::SCORING_SCALE.to_string(),
            seed,
            run: serde_json::Value::Null,
        }
    }
}

/// JSON Lines: a header object, then one [`LabeledUtterance`] per line.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<LabeledUtterance>,
    /// Directory record paths are relative to.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header)?;
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses without touching the file system.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Manifest("empty manifest".into()))?;
        let header: ManifestHeader = serde_json::from_str(first)
            .map_err(|e| Error::Manifest(format!("line 1: bad header: {e}")))?;
        if header.schema != MANIFEST_SCHEMA {
            return Err(Error::Manifest(format!("unknown schema {:?}", header.schema)));
        }
        if header.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest version {}",
                header.version
            )));
        }
        let mut records = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in lines {
            let r: LabeledUtterance = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("line {}: {e}", i + 1)))?;
            if !ids.insert(r.id.clone()) {
                return Err(Error::Manifest(format!("line {}: duplicate id {:?}", i + 1, r.id)));
            }
            if !(1.0..=8.0).contains(&r.target_score) {
                return Err(Error::Manifest(format!(
                    "line {}: target score {} outside 1..8",
                    i + 1,
                    r.target_score
                )));
            }
            records.push(r);
        }
        Ok(Self {
            header,
            records,
            base_dir: base_dir.into(),
        })
    }

    pub fn resolve(&self, record: &LabeledUtterance) -> PathBuf {
        self.base_dir.join(&record.path)
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::parse(&text, base)?;
        for r in &m.records {
            let p = m.resolve(r);
            if !p.is_file() {
                return Err(Error::Manifest(format!(
                    "utterance {:?}: missing audio file {}",
                    r.id,
                    p.display()
                )));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()?).map_err(io_err(path))
    }
}
