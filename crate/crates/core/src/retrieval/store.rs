//! Binary vector cache.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "XLKEVEC1"
//! dimension  u32
//! count      u32
//! id table   count x { id_len: u32, id: id_len UTF-8 bytes, text_fnv: u64 }
//! vectors    count x dimension x f32
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"XLKEVEC1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a vector store (bad magic)")]
    BadMagic,
    #[error("truncated vector store")]
    Truncated,
    #[error("id is not valid UTF-8")]
    BadId,
    #[error("vector {index} has {found} components, header says {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },
}

/// Cached vectors keyed by entry id, each tagged with the FNV-1a hash of
/// the text it was computed from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorStore {
    pub dimension: usize,
    pub ids: Vec<String>,
    pub text_hashes: Vec<u64>,
    pub vectors: Vec<Vec<f32>>,
}

impl VectorStore {
    pub fn lookup(&self, id: &str, text_hash: u64) -> Option<&[f32]> {
        self.ids
            .iter()
            .position(|i| i == id)
            .filter(|&p| self.text_hashes[p] == text_hash)
            .map(|p| self.vectors[p].as_slice())
    }
}

pub fn encode_store(store: &VectorStore) -> Result<Vec<u8>, StoreError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(store.dimension as u32).to_le_bytes());
    out.extend_from_slice(&(store.ids.len() as u32).to_le_bytes());
    for (id, hash) in store.ids.iter().zip(&store.text_hashes) {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        out.extend_from_slice(&hash.to_le_bytes());
    }
    for (index, v) in store.vectors.iter().enumerate() {
        if v.len() != store.dimension {
            return Err(StoreError::Dimension {
                index,
                expected: store.dimension,
                found: v.len(),
            });
        }
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).ok_or(StoreError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(StoreError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_store(bytes: &[u8]) -> Result<VectorStore, StoreError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(StoreError::BadMagic);
    }
    let dimension = c.u32()? as usize;
    let count = c.u32()? as usize;
    let mut store = VectorStore {
        dimension,
        ..Default::default()
    };
    for _ in 0..count {
        let len = c.u32()? as usize;
        let id = std::str::from_utf8(c.take(len)?).map_err(|_| StoreError::BadId)?;
        store.ids.push(id.to_string());
        store.text_hashes.push(c.u64()?);
    }
    for _ in 0..count {
        let raw = c.take(dimension * 4)?;
        store.vectors.push(
            raw.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        );
    }
    if c.pos != bytes.len() {
        return Err(StoreError::Truncated);
    }
    Ok(store)
}

pub fn read_store(path: impl AsRef<Path>) -> Result<VectorStore, StoreError> {
    decode_store(&fs::read(path)?)
}

/// Writes through a temporary file and renames into place.
pub fn write_store(store: &VectorStore, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&encode_store(store)?)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> VectorStore {
        VectorStore {
            dimension: 2,
            ids: vec!["zsre-000000".into(), "zsre-000001-zh-cn".into()],
            text_hashes: vec![1, u64::MAX],
            vectors: vec![vec![1.0, -0.5], vec![0.25, 3.0]],
        }
    }

    #[test]
    fn byte_layout() {
        let bytes = encode_store(&sample()).unwrap();
        assert_eq!(&bytes[..8], b"XLKEVEC1");
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &11u32.to_le_bytes());
        assert_eq!(&bytes[20..31], b"zsre-000000");
        let header = 16 + (4 + 11 + 8) + (4 + 17 + 8);
        assert_eq!(bytes.len(), header + 2 * 2 * 4);
        assert_eq!(&bytes[header..header + 4], &1.0f32.to_le_bytes());
        assert_eq!(decode_store(&bytes).unwrap(), sample());
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = encode_store(&sample()).unwrap();
        assert!(matches!(
            decode_store(&bytes[..bytes.len() - 1]),
            Err(StoreError::Truncated)
        ));
        let mut bad = bytes.clone();
        bad[0] = b'Y';
        assert!(matches!(decode_store(&bad), Err(StoreError::BadMagic)));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(decode_store(&long), Err(StoreError::Truncated)));
    }

    #[test]
    fn lookup_checks_text_hash() {
        let s = sample();
        assert_eq!(s.lookup("zsre-000000", 1), Some(&[1.0, -0.5][..]));
        assert_eq!(s.lookup("zsre-000000", 2), None);
        assert_eq!(s.lookup("zsre-000009", 1), None);
    }
}
