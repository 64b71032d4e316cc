//! Flat binary container of named float64 tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  b"LTVCKPT\x01"
//! u32    tensor count
//! repeat, sorted by name:
//!   u32   name length, then that many utf-8 bytes
//!   u8    rank (1 or 2)
//!   u64   each dimension
//!   f64   row-major payload
//! ```
//!
//! Writing goes through a sibling temp file and a rename, so a checkpoint
//! on disk is either the old one or the complete new one. Sorted names and
//! fixed-width encoding make the bytes a pure function of the contents.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::params::{Shape, Tensor};

const MAGIC: &[u8; 8] = b"LTVCKPT\x01";

pub fn write_tensors(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        match t.shape {
            Shape::Vector(n) => {
                buf.push(1);
                buf.extend_from_slice(&(n as u64).to_le_bytes());
            }
            Shape::Matrix(r, c) => {
                buf.push(2);
                buf.extend_from_slice(&(r as u64).to_le_bytes());
                buf.extend_from_slice(&(c as u64).to_le_bytes());
            }
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format("checkpoint truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn read_tensors(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf: &buf, pos: 0 };

    if r.take(8)? != MAGIC {
        return Err(Error::format("bad checkpoint magic"));
    }
    let count = r.u32()? as usize;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::format("tensor name is not utf-8"))?
            .to_string();
        let rank = r.u8()?;
        let shape = match rank {
            1 => Shape::Vector(r.u64()? as usize),
            2 => Shape::Matrix(r.u64()? as usize, r.u64()? as usize),
            other => return Err(Error::format(format!("unsupported tensor rank {other}"))),
        };
        let len = shape.len();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        if out.insert(name.clone(), Tensor { shape, data }).is_some() {
            return Err(Error::format(format!("duplicate tensor `{name}`")));
        }
    }
    if r.pos != buf.len() {
        return Err(Error::format("trailing bytes after last tensor"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BTreeMap<String, Tensor> {
        let mut m = BTreeMap::new();
        m.insert(
            "b.vec".to_string(),
            Tensor::vector(vec![1.5, -2.25, f64::MIN_POSITIVE]),
        );
        m.insert(
            "a.mat".to_string(),
            Tensor::matrix(2, 3, vec![0.0, 1.0, -1.0, 0.125, 3.5, -0.75]).unwrap(),
        );
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let tensors = sample();
        write_tensors(&path, &tensors).unwrap();
        let back = read_tensors(&path).unwrap();
        assert_eq!(back.len(), tensors.len());
        for (name, t) in &tensors {
            let b = &back[name];
            assert_eq!(b.shape, t.shape);
            for (x, y) in t.data.iter().zip(&b.data) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn identical_contents_produce_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.ckpt");
        let p2 = dir.path().join("two.ckpt");
        write_tensors(&p1, &sample()).unwrap();
        write_tensors(&p2, &sample()).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corrupt_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        write_tensors(&path, &sample()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_tensors(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        write_tensors(&path, &sample()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_tensors(&path), Err(Error::Format(_))));
    }
}
