//! Binary checkpoint format.
//!
//! ```text
//! "MICCHK01"
//! u32 LE      header length in bytes
//! header      UTF-8 JSON: format_version, topology, n_classes, n_mels,
//!             class_names, featurization digest and settings, training
//!             metadata, optimizer scalars, tensor manifest
//! tensors     f32 LE, manifest order
//! u32 LE      CRC32 of every preceding byte
//! ```

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adam::AdamState;
use super::model::{Cnn, ModelSpec};

pub const MAGIC: &[u8; 8] = b"MICCHK01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Everything stored next to the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub class_names: Vec<String>,
    pub n_mels: usize,
    pub featurization_digest: String,
    /// Featurization settings, opaque to this module.
    pub featurization: serde_json::Value,
    /// Training provenance (seed, split, best epoch, ...), opaque to this module.
    pub training: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Cnn<f32>,
    pub adam: Option<AdamState<f32>>,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamScalars {
    t: u64,
    beta1: f32,
    beta2: f32,
    eps: f32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    topology: ModelSpec,
    n_classes: usize,
    n_mels: usize,
    class_names: Vec<String>,
    featurization_digest: String,
    featurization: serde_json::Value,
    training: serde_json::Value,
    adam: Option<AdamScalars>,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut entries = Vec::new();
        let mut payload: Vec<&[f32]> = Vec::new();
        for (name, shape, data) in self.model.named_tensors() {
            entries.push(TensorEntry { name, dtype: "f32".into(), shape });
            payload.push(data);
        }
        if let Some(adam) = &self.adam {
            for (i, (m, v)) in adam.m.iter().zip(&adam.v).enumerate() {
                entries.push(TensorEntry { name: format!("adam.m.{i}"), dtype: "f32".into(), shape: vec![m.len()] });
                payload.push(m);
                entries.push(TensorEntry { name: format!("adam.v.{i}"), dtype: "f32".into(), shape: vec![v.len()] });
                payload.push(v);
            }
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            topology: self.model.spec().clone(),
            n_classes: self.model.n_classes(),
            n_mels: self.meta.n_mels,
            class_names: self.meta.class_names.clone(),
            featurization_digest: self.meta.featurization_digest.clone(),
            featurization: self.meta.featurization.clone(),
            training: self.meta.training.clone(),
            adam: self.adam.as_ref().map(|a| AdamScalars { t: a.t, beta1: a.beta1, beta2: a.beta2, eps: a.eps }),
            tensors: entries,
        };
        let header = serde_json::to_vec(&header).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + header.len() + 4 * payload.iter().map(|p| p.len()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in payload {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < MAGIC.len() + 8 {
            return Err(CheckpointError::Malformed("file too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(CheckpointError::ChecksumMismatch { stored, computed });
        }
        let header_len = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
        let header_end = 12usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| CheckpointError::Malformed("header length exceeds file".into()))?;
        let header: Header =
            serde_json::from_slice(&body[12..header_end]).map_err(|e| CheckpointError::Malformed(format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch { found: header.format_version, expected: FORMAT_VERSION });
        }

        let mut cursor = header_end;
        let mut tensors: Vec<(String, Vec<f32>)> = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            if entry.dtype != "f32" {
                return Err(CheckpointError::Malformed(format!("tensor {} has dtype {}", entry.name, entry.dtype)));
            }
            let n: usize = entry.shape.iter().product();
            let end = cursor + 4 * n;
            if end > body.len() {
                return Err(CheckpointError::Malformed(format!("tensor {} runs past the end of the file", entry.name)));
            }
            let data = body[cursor..end].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            tensors.push((entry.name.clone(), data));
            cursor = end;
        }
        if cursor != body.len() {
            return Err(CheckpointError::Malformed(format!("{} trailing bytes", body.len() - cursor)));
        }

        let (adam_tensors, model_tensors): (Vec<_>, Vec<_>) = tensors.into_iter().partition(|(n, _)| n.starts_with("adam."));
        let model = Cnn::from_named(header.topology, &model_tensors).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        if model.n_classes() != header.n_classes || header.class_names.len() != header.n_classes {
            return Err(CheckpointError::Malformed("class count disagrees with topology".into()));
        }
        let adam = match header.adam {
            None => None,
            Some(s) => {
                let groups = model.trainable_lens().len();
                let mut state = AdamState::<f32>::new(&model.trainable_lens());
                state.t = s.t;
                state.beta1 = s.beta1;
                state.beta2 = s.beta2;
                state.eps = s.eps;
                let find = |name: String, len: usize| {
                    adam_tensors
                        .iter()
                        .find(|(n, _)| *n == name)
                        .filter(|(_, d)| d.len() == len)
                        .map(|(_, d)| d.clone())
                        .ok_or_else(|| CheckpointError::Malformed(format!("missing or misshapen {name}")))
                };
                for i in 0..groups {
                    state.m[i] = find(format!("adam.m.{i}"), state.m[i].len())?;
                    state.v[i] = find(format!("adam.v.{i}"), state.v[i].len())?;
                }
                Some(state)
            }
        };
        Ok(Self {
            model,
            adam,
            meta: CheckpointMeta {
                class_names: header.class_names,
                n_mels: header.n_mels,
                featurization_digest: header.featurization_digest,
                featurization: header.featurization,
                training: header.training,
            },
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
