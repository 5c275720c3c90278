use crate::error::{Error, Result};
use crate::par;

use super::GrayImage;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (w, h) = (img.width, img.height);
    let mut tmp = vec![0.0; w * h];
    par::for_each_row(&mut tmp, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * img.at(x as i64 + i as i64 - r, y as i64))
                .sum();
        }
    });
    let mid = img.with_pixels(tmp);
    let mut out = vec![0.0; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * mid.at(x as i64, y as i64 + i as i64 - r))
                .sum();
        }
    });
    img.with_pixels(out)
}

/// Non-local means: each pixel becomes a weighted mean of pixels in a
/// search window, weighted by `exp(-d^2 / h^2)` with `d^2` the mean squared
/// difference between the surrounding patches. `strength = 0` is the identity.
pub fn denoise_nlm(img: &GrayImage, strength: f64, patch_radius: usize, search_radius: usize) -> GrayImage {
    if strength <= 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width, img.height);
    let pr = patch_radius as i64;
    let sr = search_radius as i64;
    let patch_n = ((2 * pr + 1) * (2 * pr + 1)) as f64;
    let inv_h2 = 1.0 / (strength * strength);
    let mut out = vec![0.0; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        let y = y as i64;
        for (x, o) in row.iter_mut().enumerate() {
            let x = x as i64;
            let (mut acc, mut wsum) = (0.0, 0.0);
            for dy in -sr..=sr {
                for dx in -sr..=sr {
                    let (qx, qy) = (x + dx, y + dy);
                    if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                        continue;
                    }
                    let mut d2 = 0.0;
                    for py in -pr..=pr {
                        for px in -pr..=pr {
                            let diff = img.at(x + px, y + py) - img.at(qx + px, qy + py);
                            d2 += diff * diff;
                        }
                    }
                    let wgt = (-(d2 / patch_n) * inv_h2).exp();
                    acc += wgt * img.at(qx, qy);
                    wsum += wgt;
                }
            }
            *o = acc / wsum;
        }
    });
    img.with_pixels(out)
}

/// Clips a histogram at `limit` and spreads the excess evenly over all bins.
/// Returns the clipped histogram (before redistribution) and the excess.
pub(crate) fn clip_histogram(hist: &[f64], limit: f64) -> (Vec<f64>, f64) {
    let mut excess = 0.0;
    let clipped = hist
        .iter()
        .map(|&c| {
            if c > limit {
                excess += c - limit;
                limit
            } else {
                c
            }
        })
        .collect();
    (clipped, excess)
}

/// Contrast-limited adaptive histogram equalization on a `tiles x tiles`
/// grid with bilinear blending between tile mappings.
pub fn clahe(img: &GrayImage, clip: f64, tiles: usize) -> Result<GrayImage> {
    if tiles == 0 {
        return Err(Error::invalid("clahe needs at least one tile"));
    }
    let (w, h) = (img.width, img.height);
    let tx = tiles.min(w).max(1);
    let ty = tiles.min(h).max(1);
    let bin = |v: f64| v.round().clamp(0.0, 255.0) as usize;
    let x_bounds: Vec<usize> = (0..=tx).map(|i| i * w / tx).collect();
    let y_bounds: Vec<usize> = (0..=ty).map(|j| j * h / ty).collect();

    let mut luts = vec![[0.0f64; 256]; tx * ty];
    for j in 0..ty {
        for i in 0..tx {
            let mut hist = [0.0f64; 256];
            for y in y_bounds[j]..y_bounds[j + 1] {
                for x in x_bounds[i]..x_bounds[i + 1] {
                    hist[bin(img.get(x, y))] += 1.0;
                }
            }
            let area: f64 = hist.iter().sum();
            let limit = (clip * area / 256.0).max(1.0);
            let (clipped, excess) = clip_histogram(&hist, limit);
            let spread = excess / 256.0;
            let lut = &mut luts[j * tx + i];
            let mut cdf = 0.0;
            for (b, c) in clipped.iter().enumerate() {
                cdf += c + spread;
                lut[b] = (cdf * 255.0 / area).clamp(0.0, 255.0);
            }
        }
    }

    let tile_w = w as f64 / tx as f64;
    let tile_h = h as f64 / ty as f64;
    let locate = |c: usize, size: f64, n: usize| -> (usize, usize, f64) {
        let f = (c as f64 + 0.5) / size - 0.5;
        if f <= 0.0 {
            return (0, 0, 0.0);
        }
        let i0 = f.floor() as usize;
        if i0 + 1 >= n {
            return (n - 1, n - 1, 0.0);
        }
        (i0, i0 + 1, f - i0 as f64)
    };
    let mut out = vec![0.0; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        let (j0, j1, fy) = locate(y, tile_h, ty);
        for (x, o) in row.iter_mut().enumerate() {
            let (i0, i1, fx) = locate(x, tile_w, tx);
            let b = bin(img.get(x, y));
            let top = (1.0 - fx) * luts[j0 * tx + i0][b] + fx * luts[j0 * tx + i1][b];
            let bot = (1.0 - fx) * luts[j1 * tx + i0][b] + fx * luts[j1 * tx + i1][b];
            *o = (1.0 - fy) * top + fy * bot;
        }
    });
    Ok(img.with_pixels(out))
}

/// `in + amount * (in - blur(in))` without clamping.
pub(crate) fn unsharp_unclamped(img: &GrayImage, amount: f64, sigma: f64) -> Vec<f64> {
    let blurred = gaussian_blur(img, sigma);
    img.pixels
        .iter()
        .zip(&blurred.pixels)
        .map(|(v, b)| v + amount * (v - b))
        .collect()
}

/// Unsharp masking, clamped to `[0, 255]`.
pub fn sharpen(img: &GrayImage, amount: f64, sigma: f64) -> Result<GrayImage> {
    if amount < 0.0 || !(sigma > 0.0) {
        return Err(Error::invalid("sharpen needs amount >= 0 and sigma > 0"));
    }
    if amount == 0.0 {
        return Ok(img.clone());
    }
    let px = unsharp_unclamped(img, amount, sigma)
        .into_iter()
        .map(|v| v.clamp(0.0, 255.0))
        .collect();
    Ok(img.with_pixels(px))
}

/// Edge-preserving bilateral filter over a `2 * ceil(2 * spatial_sigma) + 1` window.
pub fn bilateral(img: &GrayImage, spatial_sigma: f64, range_sigma: f64) -> Result<GrayImage> {
    if !(spatial_sigma > 0.0 && range_sigma > 0.0) {
        return Err(Error::invalid("bilateral sigmas must be > 0"));
    }
    let r = (2.0 * spatial_sigma).ceil() as i64;
    let inv_s = 0.5 / (spatial_sigma * spatial_sigma);
    let inv_r = 0.5 / (range_sigma * range_sigma);
    let (w, h) = (img.width, img.height);
    let mut out = vec![0.0; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        let y = y as i64;
        for (x, o) in row.iter_mut().enumerate() {
            let x = x as i64;
            let c = img.at(x, y);
            let (mut acc, mut wsum) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (qx, qy) = (x + dx, y + dy);
                    if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                        continue;
                    }
                    let v = img.at(qx, qy);
                    let wgt = (-((dx * dx + dy * dy) as f64) * inv_s - (v - c) * (v - c) * inv_r).exp();
                    acc += wgt * v;
                    wsum += wgt;
                }
            }
            *o = acc / wsum;
        }
    });
    Ok(img.with_pixels(out))
}
