//! `MEMX1` embedding files.
//!
//! ```text
//! offset  size        field
//! 0       5           magic, ASCII "MEMX1"
//! 5       4           rows, u32 little-endian
//! 9       4           cols, u32 little-endian
//! 13      rows*cols*4 payload, f32 little-endian, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gradcore::Tensor;

pub const MAGIC: &[u8; 5] = b"MEMX1";
pub const HEADER_LEN: usize = 13;

/// Dense `rows × cols` f32 matrix as stored on disk.
pub type EmbeddingMatrix = Tensor<f32>;

/// Appends the header and payload of `m` to `out`.
pub fn encode_embedding(m: &EmbeddingMatrix, out: &mut Vec<u8>) -> Result<()> {
    let (rows, cols) = m.expect_matrix("encode_embedding")?;
    if !m.is_finite() {
        return Err(Error::validation(
            "embedding",
            "matrix contains non-finite values",
        ));
    }
    out.reserve(HEADER_LEN + m.numel() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Decodes one embedding record from the front of `bytes`, returning the
/// matrix and the number of bytes consumed. `origin` is used in errors.
pub fn decode_embedding(bytes: &[u8], origin: &Path) -> Result<(EmbeddingMatrix, usize)> {
    let fmt = |msg: String| Error::Format {
        path: origin.to_path_buf(),
        msg,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fmt(format!(
            "truncated header: expected {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[..5] != MAGIC {
        return Err(fmt(format!(
            "bad magic {:?}, expected \"MEMX1\"",
            String::from_utf8_lossy(&bytes[..5])
        )));
    }
    let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(fmt(format!("empty matrix {rows}x{cols}")));
    }
    let expected = rows * cols * 4;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(fmt(format!(
            "truncated payload: expected {expected} bytes, got {}",
            payload.len()
        )));
    }
    let data: Vec<f32> = payload[..expected]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(
            origin.display().to_string(),
            format!("non-finite value at row {} col {}", pos / cols, pos % cols),
        ));
    }
    Ok((Tensor::matrix(rows, cols, data), HEADER_LEN + expected))
}

pub fn write_embedding(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    encode_embedding(m, &mut bytes)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embedding(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (m, used) = decode_embedding(&bytes, path)?;
    if used != bytes.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("trailing data: expected {used} bytes, got {}", bytes.len()),
        });
    }
    Ok(m)
}
