//! Shared binary container used by checkpoints and raw datasets:
//!
//! ```text
//! offset  size  field
//! 0       8     magic
//! 8       4     version (u32 LE, currently 1)
//! 12      8     header length H (u64 LE)
//! 20      H     header (UTF-8 JSON)
//! 20+H    ...   payload (little-endian blobs in header order, no padding)
//! ```

use crate::error::{Error, Result};

pub(crate) const VERSION: u32 = 1;
const PREFIX: usize = 8 + 4 + 8;

pub(crate) fn encode(magic: &[u8; 8], header: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(PREFIX + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(payload);
    out
}

/// Splits a container into `(header, payload)` after checking magic and version.
pub(crate) fn decode<'a>(magic: &[u8; 8], bytes: &'a [u8], what: &str) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < PREFIX {
        return Err(Error::Format(format!("{what}: truncated prefix ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != magic {
        return Err(Error::Format(format!("{what}: bad magic bytes {:?}", &bytes[..8])));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!(
            "{what}: unsupported version {version} (expected {VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let rest = &bytes[PREFIX..];
    if header_len > rest.len() as u64 {
        return Err(Error::Format(format!(
            "{what}: header length {header_len} exceeds file size"
        )));
    }
    Ok(rest.split_at(header_len as usize))
}

/// Sequential little-endian reader over a payload.
pub(crate) struct BlobReader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> BlobReader<'a> {
    pub(crate) fn new(buf: &'a [u8], what: &'a str) -> Self {
        BlobReader { buf, pos: 0, what }
    }

    fn take(&mut self, n_bytes: usize, label: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n_bytes).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "{}: truncated blob `{label}` (need {n_bytes} bytes, {} left)",
                self.what,
                self.buf.len() - self.pos
            ))),
        }
    }

    pub(crate) fn f32s(&mut self, n: usize, label: &str) -> Result<Vec<f32>> {
        let bytes = self.take(n * 4, label)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub(crate) fn u32s(&mut self, n: usize, label: &str) -> Result<Vec<u32>> {
        let bytes = self.take(n * 4, label)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes after last blob",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn push_u32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = u32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}
