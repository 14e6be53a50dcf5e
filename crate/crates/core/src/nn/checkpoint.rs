//! Versioned binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!   magic "SPW1",
//!   then zero or more sections until EOF, each
//!     name_len: u32, name: UTF-8 bytes, rows: u32, cols: u32,
//!     payload: rows*cols f32 values.

use std::path::Path;

use super::tensor::Tensor2;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SPW1";
const MAX_NAME_LEN: u32 = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSection {
    pub name: String,
    pub tensor: Tensor2<f32>,
}

pub fn write_checkpoint(path: &Path, sections: &[CheckpointSection]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for sec in sections {
        if !seen.insert(sec.name.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate checkpoint section name {:?}",
                sec.name
            )));
        }
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    for sec in sections {
        let name = sec.name.as_bytes();
        if name.len() as u64 >= MAX_NAME_LEN as u64 {
            return Err(Error::Validation(format!(
                "section name too long ({} bytes)",
                name.len()
            )));
        }
        let rows = u32::try_from(sec.tensor.rows()).map_err(|_| {
            Error::Validation(format!("section {:?} rows exceed u32", sec.name))
        })?;
        let cols = u32::try_from(sec.tensor.cols()).map_err(|_| {
            Error::Validation(format!("section {:?} cols exceed u32", sec.name))
        })?;
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&rows.to_le_bytes());
        buf.extend_from_slice(&cols.to_le_bytes());
        for &v in sec.tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<CheckpointSection>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint_bytes(path, &bytes)
}

pub fn read_checkpoint_bytes(path: &Path, bytes: &[u8]) -> Result<Vec<CheckpointSection>> {
    if bytes.len() < 4 {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            "truncated checkpoint: missing magic",
        ));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected SPW1"));
    }
    let mut off = 4usize;
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    while off < bytes.len() {
        let section_start = off as u64;
        let name_len = read_u32(path, bytes, &mut off, "name length")? as usize;
        if name_len as u64 >= MAX_NAME_LEN as u64 {
            return Err(Error::format(
                path,
                section_start,
                format!("unreasonable section name length {name_len}"),
            ));
        }
        if bytes.len() - off < name_len {
            return Err(Error::format(
                path,
                off as u64,
                "truncated checkpoint: section name cut short",
            ));
        }
        let name = std::str::from_utf8(&bytes[off..off + name_len])
            .map_err(|_| Error::format(path, off as u64, "section name is not UTF-8"))?
            .to_string();
        off += name_len;
        if !seen.insert(name.clone()) {
            return Err(Error::format(
                path,
                section_start,
                format!("duplicate section name {name:?}"),
            ));
        }
        let rows = read_u32(path, bytes, &mut off, "rows")? as usize;
        let cols = read_u32(path, bytes, &mut off, "cols")? as usize;
        let count = rows.checked_mul(cols).ok_or_else(|| {
            Error::format(path, section_start, "rows * cols overflows usize")
        })?;
        let payload_len = count.checked_mul(4).ok_or_else(|| {
            Error::format(path, section_start, "payload size overflows usize")
        })?;
        if bytes.len() - off < payload_len {
            return Err(Error::format(
                path,
                off as u64,
                format!(
                    "truncated checkpoint: section {name:?} needs {payload_len} payload bytes, {} remain",
                    bytes.len() - off
                ),
            ));
        }
        let mut data = Vec::with_capacity(count);
        for chunk in bytes[off..off + payload_len].chunks_exact(4) {
            data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        off += payload_len;
        out.push(CheckpointSection {
            name,
            tensor: Tensor2::from_flat(rows, cols, data),
        });
    }
    Ok(out)
}

fn read_u32(path: &Path, bytes: &[u8], off: &mut usize, what: &str) -> Result<u32> {
    if bytes.len() - *off < 4 {
        return Err(Error::format(
            path,
            *off as u64,
            format!("truncated checkpoint: missing {what}"),
        ));
    }
    let v = u32::from_le_bytes([bytes[*off], bytes[*off + 1], bytes[*off + 2], bytes[*off + 3]]);
    *off += 4;
    Ok(v)
}
