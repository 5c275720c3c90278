//! Middlebury-style `.flo` files: `PIEH`, width and height as i32 LE, then
//! interleaved `(u, v)` f32 LE in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::DisplacementField;

const MAGIC: &[u8; 4] = b"PIEH";

/// Sentinel written for pixels without ground truth.
pub const UNKNOWN_FLOW: f32 = 1e10;

pub fn write_flow(path: &Path, field: &DisplacementField) -> Result<()> {
    let n = field.width * field.height;
    let mut buf = Vec::with_capacity(12 + 8 * n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(field.width as i32).to_le_bytes());
    buf.extend_from_slice(&(field.height as i32).to_le_bytes());
    for (u, v) in field.u.iter().zip(&field.v) {
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_flow(path: &Path) -> Result<DisplacementField> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 12 {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic, expected PIEH"));
    }
    let dim = |o: usize| i32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let (w, h) = (dim(4), dim(8));
    if w <= 0 || h <= 0 {
        return Err(bad("non-positive dimensions"));
    }
    let (w, h) = (w as usize, h as usize);
    let n = w * h;
    if bytes.len() != 12 + 8 * n {
        return Err(bad("payload size does not match dimensions"));
    }
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u = (0..n).map(|i| f(12 + 8 * i)).collect();
    let v = (0..n).map(|i| f(16 + 8 * i)).collect();
    DisplacementField::new(w, h, u, v)
}
