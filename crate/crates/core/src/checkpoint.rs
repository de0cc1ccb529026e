//! Versioned weight archives.
//!
//! Layout: the 8-byte magic `ANOPCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, a JSON header (model kind, embedded
//! configuration record, tensor table), then every tensor's values as
//! little-endian `f32` in table order.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::nn::{ParamStore, Tensor};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"ANOPCKPT";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint not found: {0}")]
    Missing(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not a weight archive")]
    BadMagic(PathBuf),
    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed archive header: {0}")]
    Header(String),
    #[error("archive holds a '{found}' model, expected '{expected}'")]
    KindMismatch { expected: String, found: String },
    #[error("archive data is truncated")]
    Truncated,
    #[error("weights do not fit the model: {0}")]
    Incompatible(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    tensors: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

pub struct WeightArchive {
    pub kind: String,
    pub config: serde_json::Value,
    pub params: ParamStore<f32>,
}

impl WeightArchive {
    pub fn config_as<C: for<'de> Deserialize<'de>>(&self) -> Result<C, CheckpointError> {
        serde_json::from_value(self.config.clone()).map_err(|e| CheckpointError::Header(e.to_string()))
    }

    pub fn expect_kind(&self, expected: &str) -> Result<(), CheckpointError> {
        if self.kind != expected {
            return Err(CheckpointError::KindMismatch {
                expected: expected.into(),
                found: self.kind.clone(),
            });
        }
        Ok(())
    }
}

pub fn encode_archive(kind: &str, config: &impl Serialize, params: &ParamStore<f32>) -> Vec<u8> {
    let header = Header {
        kind: kind.into(),
        config: serde_json::to_value(config).expect("config serializes"),
        tensors: params
            .iter()
            .map(|(name, t, trainable)| TensorMeta {
                name: name.into(),
                shape: t.shape().to_vec(),
                trainable,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(json.len() + 20 + params.iter().map(|p| p.1.len() * 4).sum::<usize>());
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t, _) in params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_archive(
    path: impl AsRef<Path>,
    kind: &str,
    config: &impl Serialize,
    params: &ParamStore<f32>,
) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(&encode_archive(kind, config, params)).map_err(io_err)
}

pub fn decode_archive(bytes: &[u8], origin: &Path) -> Result<WeightArchive, CheckpointError> {
    if bytes.len() < 20 || &bytes[..8] != ARCHIVE_MAGIC {
        return Err(CheckpointError::BadMagic(origin.to_path_buf()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != ARCHIVE_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < hlen {
        return Err(CheckpointError::Truncated);
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let mut data = &body[hlen..];
    let mut named = Vec::with_capacity(header.tensors.len());
    for meta in header.tensors {
        let n: usize = meta.shape.iter().product();
        if data.len() < n * 4 {
            return Err(CheckpointError::Truncated);
        }
        let values = data[..n * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        data = &data[n * 4..];
        named.push((meta.name, Tensor::new(meta.shape, values), meta.trainable));
    }
    Ok(WeightArchive {
        kind: header.kind,
        config: header.config,
        params: ParamStore::from_named(named),
    })
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<WeightArchive, CheckpointError> {
    let path = path.as_ref();
    let mut f = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CheckpointError::Missing(path.to_path_buf()),
        _ => CheckpointError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_archive(&bytes, path)
}

/// Loads archived values into a freshly built store with the same layout.
pub fn restore_into(store: &mut ParamStore<f32>, archive: &WeightArchive) -> Result<(), CheckpointError> {
    let missing = store
        .load_matching(&archive.params)
        .map_err(CheckpointError::Incompatible)?;
    if !missing.is_empty() {
        return Err(CheckpointError::Incompatible(format!("missing tensors: {}", missing.join(", "))));
    }
    Ok(())
}
