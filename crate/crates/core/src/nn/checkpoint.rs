//! Binary checkpoint format.
//!
//! ```text
//! "BAILCNN1"           8 bytes magic
//! version              u8 (currently 1)
//! header_len           u32 LE
//! header               UTF-8 JSON: {"config": ModelConfig, "tensors": [{name, shape, dtype, offset}]}
//! blobs                little-endian f32 data; `offset` is relative to the first blob byte
//! crc                  u32 LE, CRC-32 (IEEE) of every preceding byte
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{ModelConfig, Parameters, PARAM_NAMES};
use super::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"BAILCNN1";
pub const VERSION: u8 = 1;
const PREFIX_LEN: usize = 8 + 1 + 4;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    UnsupportedVersion(u8),
    #[error("checkpoint truncated: need at least {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("checkpoint CRC mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("tensor manifest mismatch for {tensor}: {detail}")]
    ManifestMismatch { tensor: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

pub fn to_bytes(params: &Parameters<f32>, config: &ModelConfig) -> Vec<u8> {
    let mut offset = 0u64;
    let tensors = params
        .named()
        .map(|(name, t)| {
            let e = TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                dtype: "f32".into(),
                offset,
            };
            offset += t.len() as u64 * 4;
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        config: config.clone(),
        tensors,
    })
    .expect("header serializes");

    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + offset as usize + 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Parameters<f32>, ModelConfig), CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < PREFIX_LEN + 4 {
        return Err(CheckpointError::Truncated {
            needed: PREFIX_LEN + 4,
            found: bytes.len(),
        });
    }
    if bytes[8] != VERSION {
        return Err(CheckpointError::UnsupportedVersion(bytes[8]));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::CrcMismatch { stored, computed });
    }
    let header_len = u32::from_le_bytes(body[9..13].try_into().unwrap()) as usize;
    let blob_start = PREFIX_LEN + header_len;
    if body.len() < blob_start {
        return Err(CheckpointError::Truncated {
            needed: blob_start + 4,
            found: bytes.len(),
        });
    }
    let header: Header =
        serde_json::from_slice(&body[PREFIX_LEN..blob_start]).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let blobs = &body[blob_start..];

    let expected = header
        .config
        .param_shapes()
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    if header.tensors.len() != expected.len() {
        return Err(CheckpointError::Header(format!(
            "{} tensors in manifest, expected {}",
            header.tensors.len(),
            expected.len()
        )));
    }
    let mut tensors = Vec::with_capacity(expected.len());
    for (entry, (name, shape)) in header.tensors.iter().zip(&expected) {
        if entry.name != *name {
            return Err(CheckpointError::ManifestMismatch {
                tensor: entry.name.clone(),
                detail: format!("expected tensor {name} at this position"),
            });
        }
        if entry.shape != *shape {
            return Err(CheckpointError::ManifestMismatch {
                tensor: entry.name.clone(),
                detail: format!("shape {:?} disagrees with config shape {shape:?}", entry.shape),
            });
        }
        if entry.dtype != "f32" {
            return Err(CheckpointError::ManifestMismatch {
                tensor: entry.name.clone(),
                detail: format!("unsupported dtype {}", entry.dtype),
            });
        }
        let n: usize = shape.iter().product();
        let start = entry.offset as usize;
        let end = start + n * 4;
        if end > blobs.len() {
            return Err(CheckpointError::Truncated {
                needed: blob_start + end + 4,
                found: bytes.len(),
            });
        }
        let data = blobs[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::from_vec(shape, data).expect("length checked"));
    }
    let params = Parameters::from_tensors(tensors).expect("arity checked");
    Ok((params, header.config))
}

pub fn save_checkpoint(params: &Parameters<f32>, config: &ModelConfig, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, to_bytes(params, config)).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<(Parameters<f32>, ModelConfig), CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_bytes(&bytes)
}

/// Loads a checkpoint that must match `expected`; the error names the first
/// tensor whose shape differs.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<Parameters<f32>, CheckpointError> {
    let (params, config) = load_checkpoint(path)?;
    let want = expected
        .param_shapes()
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    for ((name, shape), t) in want.iter().zip(params.tensors()) {
        if t.shape() != shape.as_slice() {
            return Err(CheckpointError::ManifestMismatch {
                tensor: name.to_string(),
                detail: format!("checkpoint has {:?}, model expects {shape:?}", t.shape()),
            });
        }
    }
    if config != *expected {
        return Err(CheckpointError::ManifestMismatch {
            tensor: PARAM_NAMES[0].to_string(),
            detail: "tensor shapes agree but the model configuration differs".into(),
        });
    }
    Ok(params)
}
