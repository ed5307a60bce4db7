//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "SQAMODEL"
//! version      u32
//! variant tag  u16 length + UTF-8
//! feature hash u64      FNV-1a of the feature config JSON
//! metadata     u32 length + JSON (variant, dims, feature config, scoring scale, run config)
//! tensor count u32
//! per tensor   u16 length + UTF-8 name, u8 rank, u32 per dim, f32 values
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{param_specs, Dims, ModelParams, Variant};
use crate::error::{io_err, Error, Result};
use crate::signal::FeatureConfig;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"SQAMODEL";
const VERSION: u32 = 1;

/// Name of the target scale the scores live on (pseudo scores 1..8).
pub const SCORING_SCALE: &str = "snr-pseudo-score-1-8";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub features: FeatureConfig,
    pub scoring_scale: String,
    /// Serialized run configuration that produced the model.
    pub run: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    variant: Variant,
    dims: Dims,
    features: FeatureConfig,
    scoring_scale: String,
    run: serde_json::Value,
}

impl Checkpoint {
    pub fn new(params: ModelParams, features: FeatureConfig) -> Self {
        Self {
            params,
            features,
            scoring_scale: SCORING_SCALE.to_string(),
            run: serde_json::Value::Null,
        }
    }

    /// Values are stored as `f32`; parameters that are already
    /// single-precision round-trip exactly.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let variant = self.params.variant();
        let meta = Meta {
            variant,
            dims: *self.params.dims(),
            features: self.features.clone(),
            scoring_scale: self.scoring_scale.clone(),
            run: self.run.clone(),
        };
        let meta = serde_json::to_vec(&meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str16(&mut out, variant.tag());
        out.extend_from_slice(&self.features.fingerprint().to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (spec, t) in self.params.specs().iter().zip(tensors) {
            put_str16(&mut out, spec.name);
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a checkpoint; with `expected` set, a different variant is an error.
    pub fn from_bytes(bytes: &[u8], expected: Option<Variant>) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (this build reads {VERSION})"
            )));
        }
        let tag = r.str16()?;
        let variant: Variant = tag.parse()?;
        if let Some(want) = expected {
            if want != variant {
                return Err(Error::Checkpoint(format!(
                    "checkpoint holds a {variant} model, expected {want}"
                )));
            }
        }
        let hash = r.u64()?;
        let meta_len = r.u32()? as usize;
        let meta: Meta = serde_json::from_slice(r.take(meta_len)?)?;
        if meta.variant != variant {
            return Err(Error::Checkpoint(format!(
                "header variant {variant} disagrees with metadata variant {}",
                meta.variant
            )));
        }
        if meta.features.fingerprint() != hash {
            return Err(Error::Checkpoint("feature config hash mismatch".into()));
        }
        let specs = param_specs(variant, &meta.dims);
        let count = r.u32()? as usize;
        if count != specs.len() {
            return Err(Error::Checkpoint(format!(
                "{count} tensors stored, {variant} needs {}",
                specs.len()
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for spec in &specs {
            let name = r.str16()?;
            if name != spec.name {
                return Err(Error::Checkpoint(format!(
                    "found tensor {name:?} where {:?} was expected",
                    spec.name
                )));
            }
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            tensors.push(Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }
        let params = ModelParams::from_tensors(variant, meta.dims, tensors)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            params,
            features: meta.features,
            scoring_scale: meta.scoring_scale,
            run: meta.run,
        })
    }

    /// Errors unless `features` matches the configuration the model was trained with.
    pub fn ensure_features(&self, features: &FeatureConfig) -> Result<()> {
        if features.fingerprint() != self.features.fingerprint() {
            return Err(Error::Checkpoint(format!(
                "feature config mismatch: checkpoint {:?}, requested {:?}",
                self.features, features
            )));
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint.to_bytes()?).map_err(io_err(path))
}

pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<Variant>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Checkpoint::from_bytes(&bytes, expected)
}

fn put_str16(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str16(&mut self) -> Result<String> {
        let n = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
    }
}
