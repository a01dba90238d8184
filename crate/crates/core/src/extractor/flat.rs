//! The `flat_image` container: a trivial concatenation of named files used to
//! stand in for raw flash dumps.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "FLT1" | u32 entry count | { u16 path len | path (UTF-8) | u32 content len | content }*
//! ```

use thiserror::Error;

pub const FLAT_MAGIC: &[u8; 4] = b"FLT1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlatError {
    #[error("missing FLT1 magic")]
    BadMagic,
    #[error("truncated at byte {0}")]
    Truncated(usize),
    #[error("entry {0} path is not UTF-8")]
    InvalidPath(usize),
    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),
    #[error("entry {0} is too large for the format")]
    TooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatEntry {
    pub path: String,
    pub content: Vec<u8>,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FlatError> {
        let end = self.pos.checked_add(n).ok_or(FlatError::Truncated(self.pos))?;
        let slice = self.data.get(self.pos..end).ok_or(FlatError::Truncated(self.pos))?;
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, FlatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FlatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_flat(data: &[u8]) -> Result<Vec<FlatEntry>, FlatError> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4).map_err(|_| FlatError::BadMagic)? != FLAT_MAGIC {
        return Err(FlatError::BadMagic);
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for i in 0..count {
        let path_len = r.u16()? as usize;
        let path = std::str::from_utf8(r.take(path_len)?)
            .map_err(|_| FlatError::InvalidPath(i))?
            .to_string();
        let len = r.u32()? as usize;
        let content = r.take(len)?.to_vec();
        entries.push(FlatEntry { path, content });
    }
    if r.pos != data.len() {
        return Err(FlatError::TrailingBytes(data.len() - r.pos));
    }
    Ok(entries)
}

pub fn write_flat(entries: &[FlatEntry]) -> Result<Vec<u8>, FlatError> {
    let mut out = Vec::new();
    out.extend_from_slice(FLAT_MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (i, e) in entries.iter().enumerate() {
        let path_len = u16::try_from(e.path.len()).map_err(|_| FlatError::TooLarge(i))?;
        let len = u32::try_from(e.content.len()).map_err(|_| FlatError::TooLarge(i))?;
        out.extend_from_slice(&path_len.to_le_bytes());
        out.extend_from_slice(e.path.as_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&e.content);
    }
    Ok(out)
}
