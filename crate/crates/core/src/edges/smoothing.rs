use crate::error::{Error, Result};

use super::{EdgeImage, EdgeMap};

/// Kernel of odd size `k`, with the sigma OpenCV derives from the size.
fn sized_gaussian_kernel(k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    let sigma = 0.3 * ((k as f64 - 1.0) * 0.5 - 1.0) + 0.8;
    let r = (k / 2) as i64;
    let v: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Reflect-101 border index.
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

pub(crate) fn blur_map(map: &EdgeMap, k: usize) -> Vec<f64> {
    let kern = sized_gaussian_kernel(k);
    let r = (k / 2) as i64;
    let (w, h) = (map.width, map.height);
    let src: Vec<f64> = map.pixels.iter().map(|&p| p as f64).collect();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kern
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * src[y * w + reflect(x as i64 + i as i64 - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kern
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[reflect(y as i64 + i as i64 - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Gaussian-blurs the binary map with a `k x k` kernel and rescales by the
/// maximum so the result lies in `[0, 1]`.
pub fn smooth_edges_gaussian(map: &EdgeMap, k: usize, t: f64) -> Result<EdgeImage> {
    if k.is_multiple_of(2) {
        return Err(Error::invalid(format!("gaussian kernel size must be odd, got {k}")));
    }
    let mut pixels = blur_map(map, k);
    let m = pixels.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        pixels.iter_mut().for_each(|v| *v = (*v / m).clamp(0.0, 1.0));
    }
    Ok(EdgeImage {
        width: map.width,
        height: map.height,
        pixels,
        t,
    })
}

/// Stand-in for "no edgel" that keeps the parabola arithmetic finite.
const FAR: f64 = 1e20;

/// 1-D squared distance transform of a sampled function (lower envelope of
/// parabolas, Felzenszwalb and Huttenlocher).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let sq = |q: usize| (q * q) as f64;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + sq(q)) - (f[p] + sq(p))) / (2.0 * (q - p) as f64);
            // z[0] is -inf, so this never pops the last parabola
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance from every pixel to the nearest edgel
/// (infinite when the map is empty).
pub(crate) fn distance_transform(map: &EdgeMap) -> Vec<f64> {
    let (w, h) = (map.width, map.height);
    let mut grid: Vec<f64> = map
        .pixels
        .iter()
        .map(|&p| if p != 0 { 0.0 } else { FAR })
        .collect();
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        edt_1d(&col, &mut col_out);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; w];
    for y in 0..h {
        edt_1d(&grid[y * w..(y + 1) * w], &mut row_out);
        grid[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    grid.into_iter()
        .map(|d| if d >= 0.5 * FAR { f64::INFINITY } else { d.sqrt() })
        .collect()
}

/// Inverse exponential distance transform, `exp(-d / lambda)`.
pub fn smooth_edges_iedt(map: &EdgeMap, lambda: f64, t: f64) -> Result<EdgeImage> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("iedt lambda must be > 0, got {lambda}")));
    }
    let pixels = distance_transform(map)
        .into_iter()
        .map(|d| if d.is_finite() { (-d / lambda).exp() } else { 0.0 })
        .collect();
    Ok(EdgeImage {
        width: map.width,
        height: map.height,
        pixels,
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_with(w: usize, h: usize, on: &[(usize, usize)]) -> EdgeMap {
        let mut m = EdgeMap::zeros(w, h);
        for &(x, y) in on {
            m.pixels[y * w + x] = 1;
        }
        m
    }

    #[test]
    fn k1_is_identity() {
        let m = map_with(9, 7, &[(1, 1), (4, 5), (8, 6)]);
        let e = smooth_edges_gaussian(&m, 1, 0.0).unwrap();
        let expect: Vec<f64> = m.pixels.iter().map(|&p| p as f64).collect();
        assert_eq!(e.pixels, expect);
    }

    #[test]
    fn k5_spreads_mass() {
        let m = map_with(15, 15, &[(7, 7)]);
        let b = blur_map(&m, 5);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for y in 0..15 {
            for x in 0..15 {
                let inside = (5..=9).contains(&x) && (5..=9).contains(&y);
                assert_eq!(b[y * 15 + x] > 0.0, inside, "({x}, {y})");
            }
        }
        let e = smooth_edges_gaussian(&m, 5, 0.0).unwrap();
        assert_eq!(e.pixels[7 * 15 + 7], 1.0);
    }

    #[test]
    fn empty_maps_stay_empty() {
        let m = EdgeMap::zeros(6, 6);
        assert!(smooth_edges_gaussian(&m, 3, 0.0).unwrap().pixels.iter().all(|&v| v == 0.0));
        assert!(smooth_edges_iedt(&m, 2.0, 0.0).unwrap().pixels.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn iedt_values() {
        let m = map_with(10, 10, &[(0, 0)]);
        let e = smooth_edges_iedt(&m, 2.0, 0.0).unwrap();
        assert_eq!(e.pixels[0], 1.0);
        assert!((e.pixels[4 * 10 + 3] - (-2.5f64).exp()).abs() < 1e-12);
        // strictly decreasing along the diagonal
        for i in 1..10 {
            assert!(e.pixels[i * 10 + i] < e.pixels[(i - 1) * 10 + (i - 1)]);
        }
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let pts = [(2, 3), (11, 1), (7, 9), (0, 12)];
        let m = map_with(13, 14, &pts);
        let d = distance_transform(&m);
        for y in 0..14 {
            for x in 0..13 {
                let brute = pts
                    .iter()
                    .map(|&(px, py)| {
                        let (dx, dy) = (x as f64 - px as f64, y as f64 - py as f64);
                        (dx * dx + dy * dy).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!((d[y * 13 + x] - brute).abs() < 1e-12, "({x},{y})");
            }
        }
    }
}
