//! Versioned binary checkpoint.
//!
//! ```text
//! magic          8 bytes  "FTSMOECK"
//! format_version u16 LE
//! config_len     u32 LE, then config_len bytes of ModelConfig JSON
//! tensor_count   u32 LE
//! per tensor, in canonical order (see model::params):
//!   name_len u16 LE, name bytes (UTF-8)
//!   dtype    u8 (0 = f32, 1 = f64)
//!   ndim     u8, then ndim × u32 LE dims
//!   payload  product(dims) little-endian values
//! sha256         32 bytes over everything above
//! ```
//!
//! f64 payloads reload bit-exactly; f32 payloads halve the file size and
//! reload exactly only for values representable in f32.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FTSMOECK";
pub const FORMAT_VERSION: u16 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint format version {found}, this build reads {expected}")]
    VersionMismatch { found: u16, expected: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PayloadType {
    F32,
    #[default]
    F64,
}

impl PayloadType {
    fn code(self) -> u8 {
        match self {
            PayloadType::F32 => 0,
            PayloadType::F64 => 1,
        }
    }
}

pub fn write_checkpoint(params: &ModelParams, dtype: PayloadType) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let config = serde_json::to_vec(&params.config).expect("config serializes");
    buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config);
    let metas = params.tensor_metas();
    buf.extend_from_slice(&(metas.len() as u32).to_le_bytes());
    params.visit(&mut |meta, data| {
        buf.extend_from_slice(&(meta.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(meta.name.as_bytes());
        buf.push(dtype.code());
        buf.push(meta.shape.len() as u8);
        for &d in &meta.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in data {
            match dtype {
                PayloadType::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
                PayloadType::F64 => buf.extend_from_slice(&v.to_le_bytes()),
            }
        }
    });
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(digest.as_slice());
    buf
}

pub fn save_checkpoint(
    params: &ModelParams,
    path: impl AsRef<Path>,
    dtype: PayloadType,
) -> Result<(), CheckpointError> {
    fs::write(path, write_checkpoint(params, dtype))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams, CheckpointError> {
    read_checkpoint(&fs::read(path)?)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::CorruptCheckpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<ModelParams, CheckpointError> {
    let corrupt = |m: String| CheckpointError::CorruptCheckpoint(m);
    if bytes.len() < CHECKPOINT_MAGIC.len() + 2 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    if bytes.len() < 10 + DIGEST_LEN {
        return Err(corrupt("truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch".into()));
    }

    let mut cur = Cursor { buf: body, pos: 10 };
    let config_len = cur.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(cur.take(config_len)?).map_err(|e| corrupt(format!("config: {e}")))?;
    let mut params = ModelParams::init(&config, 0).map_err(|e| corrupt(format!("config: {e}")))?;
    let metas = params.tensor_metas();
    let count = cur.u32()? as usize;
    if count != metas.len() {
        return Err(corrupt(format!("{count} tensors, config implies {}", metas.len())));
    }

    let mut payloads: Vec<Vec<f64>> = Vec::with_capacity(count);
    for meta in &metas {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?).map_err(|_| corrupt("tensor name not UTF-8".into()))?;
        if name != meta.name {
            return Err(corrupt(format!("expected tensor `{}`, found `{name}`", meta.name)));
        }
        let dtype = cur.u8()?;
        let ndim = cur.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32()? as usize);
        }
        if shape != meta.shape {
            return Err(corrupt(format!("tensor `{name}` has shape {shape:?}, expected {:?}", meta.shape)));
        }
        let n: usize = shape.iter().product();
        let values = match dtype {
            0 => cur
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
            1 => cur.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
            other => return Err(corrupt(format!("unknown dtype {other}"))),
        };
        payloads.push(values);
    }
    if cur.pos != body.len() {
        return Err(corrupt("trailing bytes".into()));
    }
    let mut k = 0;
    params.visit_mut(&mut |_, s| {
        s.copy_from_slice(&payloads[k]);
        k += 1;
    });
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelParams {
        let mut c = ModelConfig::tiny();
        c.d_text = 3;
        ModelParams::init(&c, 11).unwrap()
    }

    #[test]
    fn f64_round_trip_is_exact() {
        let p = tiny();
        let back = read_checkpoint(&write_checkpoint(&p, PayloadType::F64)).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn f32_round_trip_is_within_f32_precision() {
        let p = tiny();
        let back = read_checkpoint(&write_checkpoint(&p, PayloadType::F32)).unwrap();
        let (a, b) = (p.flatten(), back.flatten());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= x.abs() * 1e-7 + 1e-30);
        }
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = write_checkpoint(&tiny(), PayloadType::F64);
        let truncated = &bytes[..bytes.len() / 2];
        assert!(matches!(read_checkpoint(truncated), Err(CheckpointError::CorruptCheckpoint(_))));
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x10;
        assert!(matches!(read_checkpoint(&flipped), Err(CheckpointError::CorruptCheckpoint(_))));
        let mut bumped = bytes.clone();
        bumped[8] += 1;
        assert!(matches!(read_checkpoint(&bumped), Err(CheckpointError::VersionMismatch { found: 2, expected: 1 })));
        assert!(matches!(read_checkpoint(b"nope"), Err(CheckpointError::CorruptCheckpoint(_))));
    }
}
