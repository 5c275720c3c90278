//! Flow-grid resampling and the handover blend.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::event::{FlowField, SensorGeometry};

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn lanczos3(x: f64) -> f64 {
    if x.abs() < 3.0 {
        sinc(x) * sinc(x / 3.0)
    } else {
        0.0
    }
}

/// Row `j` lists `(source index, weight)` taps for output sample `j`.
///
/// The kernel is stretched by the scale factor (antialiased), taps falling
/// outside the source are dropped and the rest renormalized.
fn lanczos_taps(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|j| {
            let c = (j as f64 + 0.5) * scale - 0.5;
            let support = 3.0 * scale;
            let lo = (c - support).ceil().max(0.0) as usize;
            let hi = ((c + support).floor() as i64).min(n_in as i64 - 1) as usize;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .map(|i| (i, lanczos3((i as f64 - c) / scale)))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            let s: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= s);
            taps
        })
        .collect()
}

fn resample_channel(
    v: &[f64],
    (w, h): (usize, usize),
    (tw, th): (usize, usize),
    tx: &[Vec<(usize, f64)>],
    ty: &[Vec<(usize, f64)>],
) -> Vec<f64> {
    let mut rows = vec![0.0; tw * h];
    for y in 0..h {
        for (x, taps) in tx.iter().enumerate() {
            rows[y * tw + x] = taps.iter().map(|&(i, wt)| wt * v[y * w + i]).sum();
        }
    }
    let mut out = vec![0.0; tw * th];
    for (y, taps) in ty.iter().enumerate() {
        for x in 0..tw {
            out[y * tw + x] = taps.iter().map(|&(i, wt)| wt * rows[i * tw + x]).sum();
        }
    }
    out
}

/// Lanczos-3 downsampling of both channels to `target_w x target_h` cells.
pub fn downscale_lanczos3(flow: &FlowField, target_w: usize, target_h: usize) -> Result<FlowField> {
    let (w, h) = (flow.width_cells, flow.height_cells);
    if target_w == 0 || target_h == 0 || target_w > w || target_h > h {
        return Err(Error::invalid(format!(
            "cannot downscale {w}x{h} to {target_w}x{target_h}"
        )));
    }
    if (target_w, target_h) == (w, h) {
        return Ok(flow.clone());
    }
    let tx = lanczos_taps(w, target_w);
    let ty = lanczos_taps(h, target_h);
    let vx = resample_channel(&flow.vx, (w, h), (target_w, target_h), &tx, &ty);
    let vy = resample_channel(&flow.vy, (w, h), (target_w, target_h), &tx, &ty);
    FlowField::new(target_w, target_h, vx, vy)
}

/// Replicates every cell into a `factor x factor` block.
pub fn upscale_repeat(flow: &FlowField, factor: usize) -> Result<FlowField> {
    if factor == 0 {
        return Err(Error::invalid("repeat factor must be >= 1"));
    }
    let (w, h) = (flow.width_cells, flow.height_cells);
    let (tw, th) = (w * factor, h * factor);
    let pick = |v: &[f64]| -> Vec<f64> {
        (0..tw * th)
            .map(|i| v[(i / tw / factor) * w + (i % tw) / factor])
            .collect()
    };
    FlowField::new(tw, th, pick(&flow.vx), pick(&flow.vy))
}

/// Repeat-upsamples to the given size, which must be an integer multiple
/// of the current size (the same on both axes).
pub fn upscale_repeat_to(flow: &FlowField, target_w: usize, target_h: usize) -> Result<FlowField> {
    let (w, h) = (flow.width_cells, flow.height_cells);
    let integral = target_w.is_multiple_of(w) && target_h.is_multiple_of(h) && target_w / w == target_h / h;
    if !integral || target_w < w {
        return Err(Error::invalid(format!(
            "{w}x{h} -> {target_w}x{target_h} is not an integer repeat factor"
        )));
    }
    upscale_repeat(flow, target_w / w)
}

/// Bilinear upsampling of a grid to sensor resolution. Cell centers map to
/// the centers of the pixel blocks they cover; outside the outermost
/// centers the edge values are held.
pub fn upscale_bilinear_to_sensor(flow: &FlowField, geometry: SensorGeometry) -> FlowField {
    let (gw, gh) = (flow.width_cells, flow.height_cells);
    let (w, h) = (geometry.width, geometry.height);
    let axis = |p: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let u = ((p as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = (u.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, u - i0 as f64)
    };
    let xs: Vec<_> = (0..w).map(|x| axis(x, w, gw)).collect();
    let ys: Vec<_> = (0..h).map(|y| axis(y, h, gh)).collect();
    let sample = |v: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(w * h);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = if fx == 0.0 {
                    v[y0 * gw + x0]
                } else {
                    (1.0 - fx) * v[y0 * gw + x0] + fx * v[y0 * gw + x1]
                };
                let bot = if fx == 0.0 {
                    v[y1 * gw + x0]
                } else {
                    (1.0 - fx) * v[y1 * gw + x0] + fx * v[y1 * gw + x1]
                };
                out.push(if fy == 0.0 { top } else { (1.0 - fy) * top + fy * bot });
            }
        }
        out
    };
    FlowField {
        width_cells: w,
        height_cells: h,
        vx: sample(&flow.vx),
        vy: sample(&flow.vy),
    }
}

/// `w * previous + (1 - w) * current`, elementwise.
pub fn handover(current: &FlowField, previous: &FlowField, w: f64) -> Result<FlowField> {
    if !current.same_shape(previous) {
        return Err(Error::invalid(format!(
            "handover between {}x{} and {}x{} fields",
            current.width_cells, current.height_cells, previous.width_cells, previous.height_cells
        )));
    }
    if w == 0.0 {
        return Ok(current.clone());
    }
    if w == 1.0 {
        return Ok(previous.clone());
    }
    let blend = |c: &[f64], p: &[f64]| -> Vec<f64> {
        c.iter().zip(p).map(|(c, p)| w * p + (1.0 - w) * c).collect()
    };
    FlowField::new(
        current.width_cells,
        current.height_cells,
        blend(&current.vx, &previous.vx),
        blend(&current.vy, &previous.vy),
    )
}
