//! FCK1 checkpoints: magic `FCK1`, a u64 LE header length, a UTF-8 JSON
//! header (config, tensor directory, run metadata), then every tensor's
//! f32 LE values back to back. Offsets in the directory are bytes from the
//! start of the payload.

use std::fs;
use std::path::Path;

use ahfusion_core::nn::Parameterized;
use ahfusion_core::{CoreError, FusionConfig, FusionModel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FCK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: Option<u64>,
    /// Epoch whose weights were saved.
    pub epoch: Option<usize>,
    pub devel_mf1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format_version: u32,
    pub config: FusionConfig,
    pub tensors: Vec<TensorEntry>,
    pub meta: CheckpointMeta,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic {0:?}, expected \"FCK1\"")]
    BadMagic(Vec<u8>),
    #[error("file ends inside the {0}")]
    Truncated(&'static str),
    #[error("header is not valid JSON: {0}")]
    Header(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("config in header is invalid: {0}")]
    Config(CoreError),
    #[error("tensor directory does not match the config at `{0}`")]
    Directory(String),
    #[error("payload is {actual} bytes, directory needs {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("tensor `{0}` holds a non-finite value")]
    NonFinite(String),
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: FusionModel<f32>,
    pub meta: CheckpointMeta,
}

pub fn encode(model: &FusionModel<f32>, meta: &CheckpointMeta) -> Vec<u8> {
    let mut offset = 0u64;
    let mut tensors = Vec::new();
    for p in model.params() {
        tensors.push(TensorEntry { name: p.name.clone(), shape: p.shape.clone(), offset });
        offset += 4 * p.len() as u64;
    }
    let header = Header { format_version: FORMAT_VERSION, config: model.config.clone(), tensors, meta: meta.clone() };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + offset as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        for v in &p.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 4 {
        return Err(CheckpointError::Truncated("magic"));
    }
    if bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic(bytes[..4].to_vec()));
    }
    let len_bytes = bytes.get(4..12).ok_or(CheckpointError::Truncated("header length"))?;
    let header_len = u64::from_le_bytes(len_bytes.try_into().unwrap());
    let header_end = usize::try_from(header_len).ok().and_then(|n| n.checked_add(12)).unwrap_or(usize::MAX);
    let header_bytes = bytes.get(12..header_end).ok_or(CheckpointError::Truncated("header"))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version(header.format_version));
    }
    let mut model = FusionModel::<f32>::zeros(header.config).map_err(CheckpointError::Config)?;
    let payload = &bytes[header_end..];
    let mut params = model.params_mut();
    if params.len() != header.tensors.len() {
        let missing = params.get(header.tensors.len()).map_or("<extra tensors>", |p| p.name.as_str());
        return Err(CheckpointError::Directory(missing.into()));
    }
    let expected: usize = params.iter().map(|p| 4 * p.len()).sum();
    if payload.len() != expected {
        return Err(CheckpointError::PayloadLength { expected, actual: payload.len() });
    }
    let mut offset = 0usize;
    for (p, entry) in params.iter_mut().zip(&header.tensors) {
        if p.name != entry.name || p.shape != entry.shape || entry.offset != offset as u64 {
            return Err(CheckpointError::Directory(entry.name.clone()));
        }
        let raw = &payload[offset..offset + 4 * p.len()];
        for (v, c) in p.value.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(c.try_into().unwrap());
        }
        if p.value.iter().any(|v| !v.is_finite()) {
            return Err(CheckpointError::NonFinite(entry.name.clone()));
        }
        offset += 4 * p.len();
    }
    drop(params);
    Ok(Checkpoint { model, meta: header.meta })
}

pub fn save(path: impl AsRef<Path>, model: &FusionModel<f32>, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|source| Error::Checkpoint { path: path.into(), source })
}

#[cfg(test)]
mod tests {
    use ahfusion_core::PerModality;

    use super::*;

    fn small_model(seed: u64) -> FusionModel<f32> {
        let config = FusionConfig {
            input_dims: PerModality::from_fn(|_| 5),
            d_model: 8,
            layers: 1,
            heads: 2,
            ff_factor: 2,
            prototypes_per_class: 2,
            use_cls_token: true,
            ..FusionConfig::default()
        };
        FusionModel::init(config, seed).unwrap()
    }

    #[test]
    fn round_trip_preserves_every_bit() {
        let model = small_model(3);
        let meta = CheckpointMeta { seed: Some(3), epoch: Some(4), devel_mf1: Some(87.5) };
        let back = decode(&encode(&model, &meta)).unwrap();
        assert_eq!(back.meta, meta);
        for (a, b) in model.params().iter().zip(back.model.params()) {
            assert_eq!(a.name, b.name);
            assert!(a.value.iter().zip(&b.value).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back.model.config, model.config);
    }

    #[test]
    fn encoding_is_deterministic() {
        let meta = CheckpointMeta::default();
        assert_eq!(encode(&small_model(9), &meta), encode(&small_model(9), &meta));
    }

    #[test]
    fn damage_is_reported() {
        let bytes = encode(&small_model(1), &CheckpointMeta::default());
        let mut magic = bytes.clone();
        magic[1] = b'X';
        assert!(matches!(decode(&magic), Err(CheckpointError::BadMagic(_))));
        assert!(matches!(decode(&bytes[..bytes.len() - 4]), Err(CheckpointError::PayloadLength { .. })));
        assert!(matches!(decode(&bytes[..20]), Err(CheckpointError::Truncated("header"))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(CheckpointError::PayloadLength { .. })));
    }
}
