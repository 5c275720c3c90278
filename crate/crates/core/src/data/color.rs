use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

use super::DisplacementField;

fn hsv_to_rgb(h_deg: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h_deg.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |t: f64| ((t + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Color-wheel rendering: hue from direction, saturation from magnitude
/// relative to `max_magnitude` (saturating), full value. Zero flow is white
/// and pixels without a known displacement are black.
pub fn flow_to_color(field: &DisplacementField, max_magnitude: f64) -> Result<RgbImage> {
    if !(max_magnitude > 0.0) {
        return Err(Error::invalid("max_magnitude must be > 0"));
    }
    let known = field.known_mask();
    let mut img = RgbImage::new(field.width as u32, field.height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        if !known[i] {
            *px = Rgb([0, 0, 0]);
            continue;
        }
        let (u, v) = (field.u[i] as f64, field.v[i] as f64);
        let hue = v.atan2(u).to_degrees();
        let sat = ((u * u + v * v).sqrt() / max_magnitude).min(1.0);
        *px = Rgb(hsv_to_rgb(hue, sat, 1.0));
    }
    Ok(img)
}

pub fn write_flow_png(path: &Path, field: &DisplacementField, max_magnitude: f64) -> Result<()> {
    flow_to_color(field, max_magnitude)?.save(path)?;
    Ok(())
}
