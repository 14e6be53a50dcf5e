//! Binary on-disk format for per-frame feature matrices.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FSQ1"
//! 4       4     u32 version (currently 1)
//! 8       4     u32 num_frames (T)
//! 12      4     u32 feat_dim (D)
//! 16      4     f32 fps
//! 20      4*T*D f32 payload, row-major
//! ```
//!
//! Reads and writes are bit-exact inverses of each other; fps is preserved
//! verbatim down to the bit pattern.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::FeatureSequence;

pub const MAGIC: &[u8; 4] = b"FSQ1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

pub fn write_feature_file(path: &Path, seq: &FeatureSequence) -> Result<()> {
    seq.validate()?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * seq.data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let t = u32::try_from(seq.num_frames)
        .map_err(|_| Error::Validation(format!("num_frames {} exceeds u32", seq.num_frames)))?;
    let d = u32::try_from(seq.feat_dim)
        .map_err(|_| Error::Validation(format!("feat_dim {} exceeds u32", seq.feat_dim)))?;
    buf.extend_from_slice(&t.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    buf.extend_from_slice(&seq.fps.to_le_bytes());
    for v in &seq.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_feature_bytes(path, &bytes)
}

fn read_feature_bytes(path: &Path, bytes: &[u8]) -> Result<FeatureSequence> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("truncated header: expected {HEADER_LEN} bytes, got {}", bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected FSQ1"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(
            path,
            4,
            format!("unsupported version {version}, expected {VERSION}"),
        ));
    }
    let t = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as u64;
    let fps = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let cells = t.checked_mul(d).ok_or_else(|| {
        Error::format(path, 8, format!("dimension overflow: {t} x {d}"))
    })?;
    let payload = cells
        .checked_mul(4)
        .filter(|p| usize::try_from(*p).is_ok() && usize::try_from(cells).is_ok())
        .ok_or_else(|| Error::format(path, 8, format!("dimension overflow: {t} x {d}")))?
        as usize;
    let actual = bytes.len() - HEADER_LEN;
    if actual != payload {
        return Err(Error::format(
            path,
            HEADER_LEN as u64,
            format!("payload size mismatch: expected {payload} bytes, got {actual}"),
        ));
    }
    let mut data = Vec::with_capacity(cells as usize);
    for chunk in bytes[HEADER_LEN..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let seq = FeatureSequence {
        video_id,
        num_frames: t as usize,
        feat_dim: d as usize,
        fps,
        data,
    };
    seq.validate()?;
    Ok(seq)
}
