//! Binary weight checkpoints.
//!
//! Layout (little-endian): magic `PVGW`, `u16` version, `u8` architecture
//! tag, `u16` classes, input channels, input size, CAM reduction and SAM
//! kernel, `u64` seed, `u32` tensor count; then per tensor a `u16` name
//! length, the UTF-8 name, a `u8` rank, `u32` dims and the `f32` values.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::network::{Architecture, Network, NetworkConfig};

pub const MAGIC: &[u8; 4] = b"PVGW";
pub const VERSION: u16 = 1;

pub fn to_bytes(net: &Network<f32>) -> Vec<u8> {
    let c = &net.config;
    let mut out = Vec::with_capacity(64 + 4 * net.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(c.architecture.tag());
    for v in [c.n_classes, c.in_channels, c.input_size, c.cam_reduction, c.sam_kernel] {
        out.extend_from_slice(&(v as u16).to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&(net.tensors().len() as u32).to_le_bytes());
    for t in net.tensors() {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &net.params[t.offset..t.offset + t.len()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let s = self.buf.get(self.pos..self.pos + n).ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> std::result::Result<Network<f32>, String> {
    let mut r = Cursor { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let tag = r.u8()?;
    let architecture = Architecture::from_tag(tag).ok_or(format!("unknown architecture tag {tag}"))?;
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u16()? as usize;
    }
    let [n_classes, in_channels, input_size, cam_reduction, sam_kernel] = dims;
    let seed = r.u64()?;
    let config = NetworkConfig { architecture, n_classes, in_channels, input_size, cam_reduction, sam_kernel, seed };
    let mut net = Network::<f32>::uninitialized(config).map_err(|e| e.to_string())?;
    let n = r.u32()? as usize;
    if n != net.tensors().len() {
        return Err(format!("{n} tensors, architecture has {}", net.tensors().len()));
    }
    for t in net.tensors().to_vec() {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| "tensor name is not UTF-8".to_string())?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        if name != t.name || shape != t.shape {
            return Err(format!("tensor `{name}` {shape:?} does not match expected `{}` {:?}", t.name, t.shape));
        }
        let raw = r.take(4 * t.len())?;
        for (dst, b) in net.params[t.offset..t.offset + t.len()].iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    if r.pos != buf.len() {
        return Err(format!("{} trailing bytes", buf.len() - r.pos));
    }
    Ok(net)
}

pub fn save(net: &Network<f32>, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Network<f32>> {
    let mut buf = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf).map_err(|reason| Error::Format { path: path.into(), reason })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_every_architecture() {
        for architecture in [Architecture::CbamCnn, Architecture::MultilayerCnn, Architecture::Ann] {
            let cfg = NetworkConfig { architecture, n_classes: 14, seed: 5, ..Default::default() };
            let net = Network::<f32>::new(cfg).unwrap();
            let back = from_bytes(&to_bytes(&net)).unwrap();
            assert_eq!(back.config, net.config);
            assert_eq!(back.params, net.params);
        }
    }

    #[test]
    fn rejects_corruption() {
        let net = Network::<f32>::new(NetworkConfig::default()).unwrap();
        let bytes = to_bytes(&net);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
    }
}
