use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::{EdgeImage, GrayImage};

/// Reads a binary (P5) 8-bit PGM.
pub fn read_pgm(path: &Path, t: f64) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("{}: truncated PGM header", path.display())));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(Error::Format(format!("{}: expected P5 PGM, found {magic:?}", path.display())));
    }
    let mut num = |what: &str| -> Result<usize> {
        token()?
            .parse()
            .map_err(|_| Error::Format(format!("{}: bad PGM {what}", path.display())))
    };
    let (w, h, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!(
            "{}: only 8-bit PGM is supported (maxval {maxval})",
            path.display()
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(pos + 1).min(bytes.len())..];
    if data.len() < w * h {
        return Err(Error::Format(format!("{}: truncated PGM raster", path.display())));
    }
    let scale = 255.0 / maxval as f64;
    let pixels = data[..w * h].iter().map(|&b| b as f64 * scale).collect();
    GrayImage::new(w, h, pixels, t)
}

/// Reads an 8-bit grayscale image; PGM by extension, anything else through
/// the `image` crate (PNG).
pub fn read_gray(path: &Path, t: f64) -> Result<GrayImage> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        return read_pgm(path, t);
    }
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let pixels = img.into_raw().into_iter().map(f64::from).collect();
    GrayImage::new(w as usize, h as usize, pixels, t)
}

pub fn write_pgm_u8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::invalid("raster size does not match dimensions"));
    }
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(data)?;
    Ok(())
}

pub fn write_gray_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let data: Vec<u8> = img
        .pixels
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    write_pgm_u8(path, img.width, img.height, &data)
}

/// Writes an edge image scaled from `[0, 1]` to `[0, 255]`.
pub fn write_edge_pgm(path: &Path, img: &EdgeImage) -> Result<()> {
    let data: Vec<u8> = img
        .pixels
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_pgm_u8(path, img.width, img.height, &data)
}
