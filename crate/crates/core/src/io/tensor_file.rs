//! The `QTNS` tensor container.
//!
//! ```text
//! magic     4 bytes  "QTNS"
//! version   u8       1
//! count     u32 LE
//! entries   count times:
//!   name_len u16 LE, name (UTF-8)
//!   dtype    u8 (0 = float64)
//!   rank     u8
//!   dims     rank x u64 LE
//!   payload  product(dims) x f64 LE, row-major
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"QTNS";
pub const VERSION: u8 = 1;
const DTYPE_F64: u8 = 0;

pub type NamedTensors = Vec<(String, Tensor)>;

pub fn encode_tensors(tensors: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut seen = HashSet::new();
    for (name, _) in tensors {
        if name.is_empty() {
            return Err(Error::invalid("tensor names must be nonempty"));
        }
        if name.len() > u16::MAX as usize {
            return Err(Error::invalid(format!(
                "tensor name too long: {} bytes",
                name.len()
            )));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::invalid(format!("duplicate tensor name `{name}`")));
        }
    }
    let count = u32::try_from(tensors.len())
        .map_err(|_| Error::invalid("too many tensors for one file"))?;

    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in tensors {
        let rank = u8::try_from(t.shape().len())
            .map_err(|_| Error::invalid(format!("tensor `{name}` has rank > 255")))?;
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F64);
        out.push(rank);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, file has {}",
                self.pos,
                self.buf.len()
            ))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(buf: &[u8]) -> Result<NamedTensors> {
    let mut r = Reader { buf, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32("entry count")?;

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for i in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Malformed(format!("entry {i}: name is not UTF-8")))?
            .to_string();
        if name.is_empty() || !seen.insert(name.clone()) {
            return Err(Error::Malformed(format!(
                "entry {i}: empty or duplicate name `{name}`"
            )));
        }
        let dtype = r.u8("dtype")?;
        if dtype != DTYPE_F64 {
            return Err(Error::Malformed(format!(
                "entry `{name}`: unsupported dtype {dtype}"
            )));
        }
        let rank = r.u8("rank")?;
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let d = usize::try_from(r.u64("dimension")?)
                .map_err(|_| Error::Malformed(format!("entry `{name}`: dimension overflow")))?;
            shape.push(d);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Malformed(format!("entry `{name}`: payload size overflow")))?;
        let payload = r.take(n, "payload")?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != buf.len() {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after last entry",
            buf.len() - r.pos
        )));
    }
    Ok(out)
}

pub fn write_tensors(path: impl AsRef<Path>, tensors: &[(String, Tensor)]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensors(tensors)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: impl AsRef<Path>) -> Result<NamedTensors> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes)
}
