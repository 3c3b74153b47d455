//! EMB1: one embedding matrix per file.
//!
//! Layout: magic `EMB1`, then u32 LE version (1), u32 LE rows, u32 LE cols,
//! then `rows × cols` f32 LE values in row-major order.

use std::fs;
use std::path::Path;

use ahfusion_core::{CoreError, EmbeddingMatrix};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbError {
    #[error("bad magic {0:?}, expected \"EMB1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported EMB1 version {0}")]
    UnsupportedVersion(u32),
    #[error("file is {0} bytes, shorter than the 16-byte header")]
    TruncatedHeader(usize),
    #[error("payload is {actual} bytes but a {rows}x{cols} matrix needs {expected}")]
    PayloadLength { rows: usize, cols: usize, expected: usize, actual: usize },
    #[error("zero-sized matrix {rows}x{cols}")]
    ZeroDims { rows: usize, cols: usize },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
}

pub fn encode(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.data().len() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
    for v in matrix.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(EmbError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(EmbError::TruncatedHeader(bytes.len()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(EmbError::BadMagic(magic));
    }
    if word(4) != VERSION {
        return Err(EmbError::UnsupportedVersion(word(4)));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    if rows == 0 || cols == 0 {
        return Err(EmbError::ZeroDims { rows, cols });
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = rows.checked_mul(cols).and_then(|n| n.checked_mul(4)).unwrap_or(usize::MAX);
    if payload.len() != expected {
        return Err(EmbError::PayloadLength { rows, cols, expected, actual: payload.len() });
    }
    let data: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(EmbError::NonFinite(i));
    }
    Ok(EmbeddingMatrix::new(rows, cols, data).expect("validated above"))
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|source| Error::Embedding { path: path.into(), source })
}

pub fn write_embedding_file(path: impl AsRef<Path>, matrix: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(matrix)).map_err(|e| Error::io(path, e))
}

/// Validates `data` as a `rows × cols` matrix before anything touches disk.
pub fn write_raw(path: impl AsRef<Path>, rows: usize, cols: usize, data: &[f32]) -> Result<()> {
    let path = path.as_ref();
    let matrix = EmbeddingMatrix::new(rows, cols, data.to_vec()).map_err(|e| {
        let source = match e {
            CoreError::NonFiniteEmbedding { index } => EmbError::NonFinite(index),
            CoreError::EmptyEmbedding { rows, cols } => EmbError::ZeroDims { rows, cols },
            _ => EmbError::PayloadLength { rows, cols, expected: rows * cols * 4, actual: data.len() * 4 },
        };
        Error::Embedding { path: path.into(), source }
    })?;
    write_embedding_file(path, &matrix)
}
