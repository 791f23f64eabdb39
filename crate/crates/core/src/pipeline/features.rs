//! Binary feature tensor files.
//!
//! Layout (little-endian): magic `PVGF`, `u16` version, `u32` height, width
//! and channels, `u16` class id, then `H * W * C` `f32` values, row-major and
//! channel-last.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::preprocess::FeatureTensor;

pub const MAGIC: &[u8; 4] = b"PVGF";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 12 + 2;

pub fn encode(t: &FeatureTensor, class_id: u16) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [t.size, t.size, t.channels] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&class_id.to_le_bytes());
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(buf: &[u8]) -> std::result::Result<(FeatureTensor, u16), String> {
    if buf.len() < HEADER_LEN {
        return Err(format!("{} bytes is shorter than the header", buf.len()));
    }
    if &buf[..4] != MAGIC {
        return Err("bad magic".into());
    }
    let u16_at = |k: usize| u16::from_le_bytes([buf[k], buf[k + 1]]);
    let u32_at = |k: usize| u32::from_le_bytes(buf[k..k + 4].try_into().unwrap()) as usize;
    let version = u16_at(4);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let (h, w, c) = (u32_at(6), u32_at(10), u32_at(14));
    if h != w {
        return Err(format!("non-square tensor {h}x{w}"));
    }
    let class = u16_at(18);
    let n = h.checked_mul(w).and_then(|x| x.checked_mul(c)).ok_or("dimensions overflow")?;
    if buf.len() != HEADER_LEN + 4 * n {
        return Err(format!("expected {} bytes of data, found {}", 4 * n, buf.len() - HEADER_LEN));
    }
    let data = buf[HEADER_LEN..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok((FeatureTensor { size: h, channels: c, data }, class))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn read(path: &Path) -> Result<(FeatureTensor, u16)> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf).map_err(|reason| Error::Format { path: path.into(), reason })
}
