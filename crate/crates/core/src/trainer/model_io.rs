//! FEVL1 tensor files.
//!
//! Layout: the 5-byte magic `FEVL1`, a little-endian u32 tensor count, then
//! per tensor a u32 name length, the UTF-8 name, a u32 rank and one u64 per
//! dimension. The data section follows: every tensor's values as
//! little-endian f64, in manifest order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"FEVL1";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn encode_tensors(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    out.extend((tensors.len() as u32).to_le_bytes());
    for t in tensors {
        let n: usize = t.dims.iter().product();
        if n != t.data.len() {
            return Err(Error::shape(
                "encode_tensors",
                format!(
                    "tensor '{}' has {} values for dims {:?}",
                    t.name,
                    t.data.len(),
                    t.dims
                ),
            ));
        }
        out.extend((t.name.len() as u32).to_le_bytes());
        out.extend(t.name.as_bytes());
        out.extend((t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend((d as u64).to_le_bytes());
        }
    }
    for t in tensors {
        for v in &t.data {
            out.extend(v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> std::result::Result<usize, String> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| "dimension overflows usize".to_string())
    }
}

pub fn decode_tensors(bytes: &[u8]) -> std::result::Result<Vec<NamedTensor>, String> {
    if bytes.len() < 5 || &bytes[..5] != MAGIC {
        return Err("missing FEVL1 magic".into());
    }
    let mut c = Cursor { bytes, pos: 5 };
    let count = c.u32()?;
    let mut heads = Vec::new();
    for _ in 0..count {
        let len = c.u32()?;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| "tensor name is not UTF-8".to_string())?
            .to_string();
        let rank = c.u32()?;
        let dims = (0..rank)
            .map(|_| c.u64())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        heads.push((name, dims));
    }
    let mut out = Vec::with_capacity(count);
    for (name, dims) in heads {
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or("tensor size overflows")?;
        let raw = c.take(n.checked_mul(8).ok_or("tensor size overflows")?)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        out.push(NamedTensor { name, dims, data });
    }
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    Ok(out)
}

pub fn write_tensors(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    fs::write(path, encode_tensors(tensors)?).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes).map_err(|msg| Error::Format {
        path: path.display().to_string(),
        msg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let t = vec![
            NamedTensor {
                name: "a.weight".into(),
                dims: vec![2, 3],
                data: vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300, -7.25, 0.1],
            },
            NamedTensor {
                name: "s".into(),
                dims: vec![],
                data: vec![64.0],
            },
        ];
        let bytes = encode_tensors(&t).unwrap();
        assert_eq!(&bytes[..5], b"FEVL1");
        let back = decode_tensors(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back[0].data[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(encode_tensors(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_files_rejected() {
        let t = vec![NamedTensor {
            name: "x".into(),
            dims: vec![2],
            data: vec![1.0, 2.0],
        }];
        let bytes = encode_tensors(&t).unwrap();
        assert!(decode_tensors(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_tensors(b"FEVL2").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_tensors(&extra).is_err());
        let bad = NamedTensor {
            name: "y".into(),
            dims: vec![3],
            data: vec![1.0],
        };
        assert!(encode_tensors(&[bad]).is_err());
    }
}
