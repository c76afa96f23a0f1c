//! Parameter checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        8 bytes  "DCMNCKPT"
//! version      u32      1
//! header_len   u64
//! header       JSON NetworkConfig, header_len bytes
//! count        u32      number of tensors
//! per tensor:
//!   name_len   u32
//!   name       UTF-8
//!   ndim       u32
//!   dims       ndim x u64
//!   data       product(dims) x f32, row-major
//! ```
//!
//! Running batch-norm statistics are stored like any other tensor.

use std::path::Path;

use super::{Network, NetworkConfig};
use crate::error::{Error, Location, Result};

pub const MAGIC: &[u8; 8] = b"DCMNCKPT";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(net: &Network) -> Vec<u8> {
    let header = serde_json::to_vec(net.config()).expect("config serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    let tensors = net.params().tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::parse(Location::Byte(self.pos), msg))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.fail(format!("truncated checkpoint: need {n} more bytes"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, v: u64, unit: usize) -> Result<usize> {
        let rest = (self.bytes.len() - self.pos) as u64;
        match v.checked_mul(unit as u64) {
            Some(total) if total <= rest => Ok(v as usize),
            _ => self.fail(format!("length {v} exceeds the remaining input")),
        }
    }
}

/// Tensors of a checkpoint as `(name, shape, values)`, plus its config.
pub fn decode_tensors(bytes: &[u8]) -> Result<(NetworkConfig, Vec<(String, Vec<usize>, Vec<f64>)>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::parse(Location::Byte(0), "not a network checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return r.fail(format!("unsupported checkpoint version {version}"));
    }
    let hl = r.u64()?;
    let hl = r.len(hl, 1)?;
    let config: NetworkConfig = serde_json::from_slice(r.take(hl)?)?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let nl = r.u32()? as u64;
        let nl = r.len(nl, 1)?;
        let name = match std::str::from_utf8(r.take(nl)?) {
            Ok(s) => s.to_string(),
            Err(_) => return r.fail("tensor name is not UTF-8"),
        };
        let ndim = r.u32()? as u64;
        let ndim = r.len(ndim, 8)?;
        let mut shape = Vec::with_capacity(ndim);
        let mut numel: u64 = 1;
        for _ in 0..ndim {
            let d = r.u64()?;
            numel = match numel.checked_mul(d) {
                Some(v) => v,
                None => return r.fail("tensor size overflows"),
            };
            shape.push(d as usize);
        }
        let numel = r.len(numel, 4)?;
        let data = r
            .take(numel * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        tensors.push((name, shape, data));
    }
    if r.pos != bytes.len() {
        return r.fail("trailing bytes after the last tensor");
    }
    Ok((config, tensors))
}

/// Rebuilds a network from checkpoint bytes.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Network> {
    let (config, tensors) = decode_tensors(bytes)?;
    let mut net = Network::new(config, 0)?;
    net.params_mut().load_from(&tensors)?;
    Ok(net)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(net)).map_err(|e| Error::io_path(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = std::fs::read(path).map_err(|e| Error::io_path(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::BranchWidths;

    fn net() -> Network {
        Network::new(NetworkConfig::toy(3, &[0.3, 0.6], true, BranchWidths::new(4, 3)), 2).unwrap()
    }

    #[test]
    fn round_trip_is_f32_exact() {
        let n = net();
        let bytes = encode_checkpoint(&n);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.config(), n.config());
        for (a, b) in n.params().tensors().iter().zip(back.params().tensors()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.trainable, b.trainable);
            for (x, y) in a.data.iter().zip(b.data.iter()) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn corruption_is_reported() {
        let bytes = encode_checkpoint(&net());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut ver = bytes;
        ver[8] = 9;
        let err = decode_checkpoint(&ver).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");
    }
}
