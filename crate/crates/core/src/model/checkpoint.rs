//! Checkpoint files.
//!
//! ```text
//! "MIMECKPT"          8 bytes
//! version             u32 LE
//! header length       u32 LE
//! header              JSON: d, heads, variant, meme_scale, parameter names and shapes
//! parameters          one MEMX1 record per parameter, in header order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{decode_embedding, encode_embedding};
use crate::error::{Error, Result};
use crate::gradcore::ParamSet;
use crate::model::{MimeParams, VariantSpec};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MIMECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    d: usize,
    heads: usize,
    variant: VariantSpec,
    meme_scale: Option<f32>,
    params: Vec<(String, Vec<usize>)>,
}

pub fn checkpoint_bytes(params: &MimeParams<f32>) -> Result<Vec<u8>> {
    let tensors = params.named_tensors();
    let header = Header {
        d: params.d,
        heads: params.heads,
        variant: params.variant,
        meme_scale: params.meme_scale(),
        params: tensors
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in tensors {
        encode_embedding(t, &mut out)?;
    }
    Ok(out)
}

pub fn save_checkpoint(params: &MimeParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_bytes(params)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MimeParams<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes, path)
}

/// Loads a checkpoint and rejects it up front if its model dim differs
/// from `d` (the dim of the corpus it will be used with).
pub fn load_checkpoint_for_dim(path: impl AsRef<Path>, d: usize) -> Result<MimeParams<f32>> {
    let p = load_checkpoint(path)?;
    if p.d != d {
        return Err(Error::dim("load_checkpoint", &[p.d], &[d]));
    }
    Ok(p)
}

fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<MimeParams<f32>> {
    let fmt = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fmt("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < hlen {
        return Err(fmt(format!(
            "truncated header: expected {hlen} bytes, got {}",
            body.len()
        )));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| fmt(format!("bad header: {e}")))?;
    let mut params = MimeParams::<f32>::zeros(header.d, header.heads, header.variant)?;
    if let Some(s) = header.meme_scale {
        params.set_meme_scale(s);
    }

    let mut offset = hlen;
    {
        let mut slots = params.named_tensors_mut();
        if slots.len() != header.params.len() {
            return Err(fmt(format!(
                "header lists {} parameters, variant needs {}",
                header.params.len(),
                slots.len()
            )));
        }
        for ((name, shape), (want, slot)) in header.params.iter().zip(slots.iter_mut()) {
            if name != want || shape.as_slice() != slot.shape() {
                return Err(fmt(format!(
                    "parameter {name} {shape:?} does not match expected {want} {:?}",
                    slot.shape()
                )));
            }
            let (t, used) = decode_embedding(&body[offset..], path)?;
            if t.shape() != slot.shape() {
                return Err(Error::dim(
                    format!("checkpoint[{name}]"),
                    slot.shape(),
                    t.shape(),
                ));
            }
            **slot = t;
            offset += used;
        }
    }
    if offset != body.len() {
        return Err(fmt(format!("{} trailing bytes", body.len() - offset)));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_every_preset() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in crate::model::PRESETS {
            let p = MimeParams::<f32>::init(8, 2, *v, 7).unwrap();
            let path = dir
                .path()
                .join(format!("{}.ckpt", name.replace(['+', '-'], "_")));
            save_checkpoint(&p, &path).unwrap();
            assert_eq!(load_checkpoint(&path).unwrap(), p, "{name}");
        }
    }

    #[test]
    fn version_mismatch() {
        let p = MimeParams::<f32>::init(4, 1, VariantSpec::base(), 1).unwrap();
        let mut bytes = checkpoint_bytes(&p).unwrap();
        bytes[8] = 9;
        let err = parse_checkpoint(&bytes, Path::new("x")).unwrap_err();
        assert!(matches!(
            err,
            Error::CheckpointVersion {
                found: 9,
                expected: 1
            }
        ));
    }

    #[test]
    fn meme_scale_survives() {
        let mut p = MimeParams::<f32>::init(4, 1, VariantSpec::mime(), 1).unwrap();
        p.set_meme_scale(0.25);
        let back = parse_checkpoint(&checkpoint_bytes(&p).unwrap(), Path::new("x")).unwrap();
        assert_eq!(back.meme_scale(), Some(0.25));
    }

    #[test]
    fn dim_checked_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(
            &MimeParams::<f32>::init(8, 2, VariantSpec::mime(), 1).unwrap(),
            &path,
        )
        .unwrap();
        assert!(matches!(
            load_checkpoint_for_dim(&path, 16),
            Err(Error::Dimension { .. })
        ));
        assert!(load_checkpoint_for_dim(&path, 8).is_ok());
    }
}
