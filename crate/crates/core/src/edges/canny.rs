use std::collections::VecDeque;

use crate::error::{Error, Result};

use super::GrayImage;

/// Binary edge map, 1 at edgels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl EdgeMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        EdgeMap {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x] != 0
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }
}

/// Canny detector: 3x3 Sobel, L2 magnitude, non-maximum suppression and
/// 8-connected hysteresis between `low` and `high` (OpenCV scaling).
pub fn canny(img: &GrayImage, low: f64, high: f64) -> Result<EdgeMap> {
    if !(low < high) {
        return Err(Error::invalid(format!("canny needs low < high, got ({low}, {high})")));
    }
    let (w, h) = (img.width, img.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let p = |dx: i64, dy: i64| img.at(x + dx, y + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y as usize * w + x as usize;
            gx[i] = sx;
            gy[i] = sy;
            mag[i] = (sx * sx + sy * sy).sqrt();
        }
    }

    let m = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let tan22 = (22.5f64).to_radians().tan();
    let tan67 = (67.5f64).to_radians().tan();
    // 0: below low, 1: weak candidate, 2: strong
    let mut class = vec![0u8; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            if v <= low {
                continue;
            }
            let (ax, ay) = (gx[i].abs(), gy[i].abs());
            // ties keep the first pixel of a plateau only
            let is_max = if ay <= ax * tan22 {
                v > m(x - 1, y) && v >= m(x + 1, y)
            } else if ay >= ax * tan67 {
                v > m(x, y - 1) && v >= m(x, y + 1)
            } else if (gx[i] > 0.0) == (gy[i] > 0.0) {
                v > m(x - 1, y - 1) && v > m(x + 1, y + 1)
            } else {
                v > m(x + 1, y - 1) && v > m(x - 1, y + 1)
            };
            if is_max {
                class[i] = if v > high { 2 } else { 1 };
            }
        }
    }

    let mut out = EdgeMap::zeros(w, h);
    let mut queue: VecDeque<usize> = class
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 2)
        .map(|(i, _)| i)
        .collect();
    for &i in &queue {
        out.pixels[i] = 1;
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if class[j] >= 1 && out.pixels[j] == 0 {
                    out.pixels[j] = 1;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(out)
}
