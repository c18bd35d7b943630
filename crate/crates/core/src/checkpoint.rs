//! Binary checkpoint format for parameter vectors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "GFNN" | version u16 | segment_count u32
//! per segment: name_len u16 | name bytes | offset u64 | len u64 | partition u8
//! values_len u64 | values (f64 little-endian)
//! ```
//!
//! The segment table carries the shared/personal partition so the federated
//! split survives serialization. Round-trips are byte-exact.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::nn::{ParamVector, Partition, Segment};

pub const MAGIC: &[u8; 4] = b"GFNN";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected GFNN, found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

pub fn encode(params: &ParamVector) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.layout.len() as u32).to_le_bytes());
    for seg in &params.layout {
        let name = seg.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(seg.offset as u64).to_le_bytes());
        out.extend_from_slice(&(seg.len as u64).to_le_bytes());
        out.push(match seg.partition {
            Partition::Shared => 0,
            Partition::Personal => 1,
        });
    }
    out.extend_from_slice(&(params.values.len() as u64).to_le_bytes());
    for v in &params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ParamVector, CheckpointError> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic = cursor.take::<4>()?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic { found: magic });
    }
    let version = u16::from_le_bytes(cursor.take::<2>()?);
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let segment_count = u32::from_le_bytes(cursor.take::<4>()?) as usize;
    let mut layout = Vec::with_capacity(segment_count);
    for _ in 0..segment_count {
        let name_len = u16::from_le_bytes(cursor.take::<2>()?) as usize;
        let name_bytes = cursor.take_slice(name_len)?;
        let name = String::from_utf8(name_bytes.to_vec())
            .map_err(|_| CheckpointError::Corrupt("segment name is not utf-8".into()))?;
        let offset = u64::from_le_bytes(cursor.take::<8>()?) as usize;
        let len = u64::from_le_bytes(cursor.take::<8>()?) as usize;
        let partition = match cursor.take::<1>()?[0] {
            0 => Partition::Shared,
            1 => Partition::Personal,
            other => {
                return Err(CheckpointError::Corrupt(format!("unknown partition tag {other}")))
            }
        };
        layout.push(Segment { name, offset, len, partition });
    }
    let values_len = u64::from_le_bytes(cursor.take::<8>()?) as usize;
    let mut values = Vec::with_capacity(values_len);
    for _ in 0..values_len {
        values.push(f64::from_le_bytes(cursor.take::<8>()?));
    }
    if cursor.pos != bytes.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes after payload",
            bytes.len() - cursor.pos
        )));
    }
    let pv = ParamVector { values, layout };
    if !pv.layout_is_tiling() {
        return Err(CheckpointError::Corrupt("segment table does not tile the payload".into()));
    }
    Ok(pv)
}

pub fn save(params: &ParamVector, path: &Path) -> Result<(), CheckpointError> {
    let mut file = File::create(path)?;
    file.write_all(&encode(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamVector, CheckpointError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let slice = self.take_slice(N)?;
        let mut out = [0u8; N];
        out.copy_from_slice(slice);
        Ok(out)
    }

    fn take_slice(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt(format!(
                "truncated at byte {}: needed {n} more, {} available",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
}
