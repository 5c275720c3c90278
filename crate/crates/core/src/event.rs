//! Event data, linear-motion warping and images of warped events (IWE).
//!
//! Coordinates follow the image convention: `x` is the column, `y` the row,
//! the origin is the top-left pixel and pixel centers sit at integer
//! coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// One pixel activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub x: f64,
    pub y: f64,
    /// Seconds.
    pub t: f64,
    /// +1 or -1.
    pub p: i8,
}

impl Event {
    pub fn new(x: f64, y: f64, t: f64, p: i8) -> Self {
        Event { x, y, t, p }
    }
}

/// Width and height of the sensor in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: usize,
    pub height: usize,
}

impl SensorGeometry {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::invalid(format!(
                "sensor geometry must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(SensorGeometry { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64
    }
}

/// A time-sorted batch of events covering `[t0, t1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSet {
    events: Vec<Event>,
    t0: f64,
    t1: f64,
}

impl EventSet {
    /// Builds a set, rejecting unsorted or non-finite timestamps and bad polarities.
    pub fn new(events: Vec<Event>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if !(e.t.is_finite() && e.x.is_finite() && e.y.is_finite()) {
                return Err(Error::invalid(format!("event {i} has non-finite fields")));
            }
            if e.p != 1 && e.p != -1 {
                return Err(Error::invalid(format!(
                    "event {i} has polarity {}, expected +1 or -1",
                    e.p
                )));
            }
        }
        if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(Error::invalid(format!(
                "events are not sorted by time at index {}",
                i + 1
            )));
        }
        let (t0, t1) = match (events.first(), events.last()) {
            (Some(a), Some(b)) => (a.t, b.t),
            _ => (0.0, 0.0),
        };
        Ok(EventSet { events, t0, t1 })
    }

    /// Like [`EventSet::new`] but also checks every event lies on the sensor.
    pub fn with_geometry(events: Vec<Event>, geometry: SensorGeometry) -> Result<Self> {
        if let Some(i) = events.iter().position(|e| !geometry.contains(e.x, e.y)) {
            let e = events[i];
            return Err(Error::invalid(format!(
                "event {i} at ({}, {}) lies outside the {}x{} sensor",
                e.x, e.y, geometry.width, geometry.height
            )));
        }
        Self::new(events)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn t_mid(&self) -> f64 {
        0.5 * (self.t0 + self.t1)
    }

    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

/// Per-cell velocities (px/s) on a regular grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub width_cells: usize,
    pub height_cells: usize,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width_cells: usize, height_cells: usize) -> Self {
        Self::constant(width_cells, height_cells, 0.0, 0.0)
    }

    pub fn constant(width_cells: usize, height_cells: usize, vx: f64, vy: f64) -> Self {
        let n = width_cells * height_cells;
        FlowField {
            width_cells,
            height_cells,
            vx: vec![vx; n],
            vy: vec![vy; n],
        }
    }

    pub fn new(width_cells: usize, height_cells: usize, vx: Vec<f64>, vy: Vec<f64>) -> Result<Self> {
        let n = width_cells * height_cells;
        if n == 0 || vx.len() != n || vy.len() != n {
            return Err(Error::invalid(format!(
                "flow field {width_cells}x{height_cells} needs {n} entries per channel, got {} and {}",
                vx.len(),
                vy.len()
            )));
        }
        Ok(FlowField {
            width_cells,
            height_cells,
            vx,
            vy,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.width_cells * self.height_cells
    }

    pub fn same_shape(&self, other: &FlowField) -> bool {
        self.width_cells == other.width_cells && self.height_cells == other.height_cells
    }

    pub fn is_finite(&self) -> bool {
        self.vx.iter().chain(&self.vy).all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("flow field contains non-finite entries"))
        }
    }

    /// Flattens to `[vx..., vy...]`, the optimizer's parameter layout.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.cell_count());
        v.extend_from_slice(&self.vx);
        v.extend_from_slice(&self.vy);
        v
    }

    pub fn from_vector(width_cells: usize, height_cells: usize, v: &[f64]) -> Result<Self> {
        let n = width_cells * height_cells;
        if v.len() != 2 * n {
            return Err(Error::invalid(format!(
                "parameter vector of length {} does not fit a {width_cells}x{height_cells} field",
                v.len()
            )));
        }
        Self::new(width_cells, height_cells, v[..n].to_vec(), v[n..].to_vec())
    }

    pub fn scaled(&self, c: f64) -> FlowField {
        FlowField {
            width_cells: self.width_cells,
            height_cells: self.height_cells,
            vx: self.vx.iter().map(|v| v * c).collect(),
            vy: self.vy.iter().map(|v| v * c).collect(),
        }
    }
}

/// Gaussian splatting parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IweConfig {
    /// Standard deviation of the splat (px).
    pub sigma: f64,
    /// Truncation radius (px), at least `3 * sigma`.
    pub support_radius: f64,
}

impl Default for IweConfig {
    fn default() -> Self {
        IweConfig {
            sigma: 1.0,
            support_radius: 3.0,
        }
    }
}

impl IweConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("iwe sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.support_radius >= 3.0 * self.sigma - 1e-12) || !self.support_radius.is_finite() {
            return Err(Error::invalid(format!(
                "iwe support radius {} is below 3 sigma",
                self.support_radius
            )));
        }
        Ok(())
    }
}

/// Real-valued image of (warped) events at a reference time.
#[derive(Debug, Clone, PartialEq)]
pub struct IweImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub t_ref: f64,
}

impl IweImage {
    pub fn zeros(width: usize, height: usize, t_ref: f64) -> Self {
        IweImage {
            width,
            height,
            pixels: vec![0.0; width * height],
            t_ref,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }
}

/// 1-D splat weights along one axis.
///
/// The profile is a Gaussian with a quadratic taper that brings both value
/// and slope to zero at the support radius, so the IWE is continuously
/// differentiable in the event position. Weights are renormalized over the
/// whole support, including pixels that fall off the sensor.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SplatKernel {
    inv_two_var: f64,
    inv_var: f64,
    radius: f64,
    edge_value: f64,
    radius_sq: f64,
}

/// Support of one axis for one event: first pixel index plus weights and
/// their derivatives w.r.t. the event coordinate.
#[derive(Debug, Default, Clone)]
pub(crate) struct AxisStamp {
    pub start: i64,
    pub w: Vec<f64>,
    pub dw: Vec<f64>,
}

impl SplatKernel {
    pub fn new(cfg: &IweConfig) -> Self {
        let var = cfg.sigma * cfg.sigma;
        let r = cfg.support_radius;
        SplatKernel {
            inv_two_var: 0.5 / var,
            inv_var: 1.0 / var,
            radius: r,
            edge_value: (-r * r * 0.5 / var).exp(),
            radius_sq: r * r,
        }
    }

    /// Unnormalized profile and its derivative w.r.t. the offset `d`.
    #[inline]
    fn profile(&self, d: f64) -> (f64, f64) {
        let d2 = d * d;
        if d2 >= self.radius_sq {
            return (0.0, 0.0);
        }
        let g = (-d2 * self.inv_two_var).exp();
        let v = g - self.edge_value * (1.0 + (self.radius_sq - d2) * self.inv_two_var);
        let dv = d * self.inv_var * (self.edge_value - g);
        (v, dv)
    }

    /// Fills `stamp` for an event at coordinate `c`. With `with_derivative`
    /// false only the weights are computed.
    pub fn axis(&self, c: f64, with_derivative: bool, stamp: &mut AxisStamp) {
        let lo = (c - self.radius).ceil() as i64;
        let hi = (c + self.radius).floor() as i64;
        stamp.start = lo;
        stamp.w.clear();
        stamp.dw.clear();
        let mut z = 0.0;
        let mut dz = 0.0;
        for p in lo..=hi {
            let (v, dv) = self.profile(p as f64 - c);
            // d/dc of v(p - c) is -dv
            stamp.w.push(v);
            stamp.dw.push(-dv);
            z += v;
            dz -= dv;
        }
        if z <= 0.0 {
            stamp.w.iter_mut().for_each(|w| *w = 0.0);
            stamp.dw.iter_mut().for_each(|w| *w = 0.0);
            return;
        }
        let inv_z = 1.0 / z;
        for (w, dw) in stamp.w.iter_mut().zip(stamp.dw.iter_mut()) {
            let wn = *w * inv_z;
            if with_derivative {
                *dw = (*dw - wn * dz) * inv_z;
            }
            *w = wn;
        }
    }
}

/// Maps each event to the flow cells that determine its velocity.
///
/// A grid of `gw x gh` cells is first expanded to sensor resolution by
/// repeat-tiling; the per-event velocity is then the bilinear interpolation
/// of that sensor-resolution field at the event's original position. When
/// the grid equals the sensor resolution this is plain bilinear sampling.
#[derive(Debug, Clone)]
pub(crate) struct FlowSampler {
    pub grid_w: usize,
    pub grid_h: usize,
    /// Four `(cell, weight)` taps per event.
    taps: Vec<[(u32, f64); 4]>,
}

impl FlowSampler {
    pub fn new(events: &[Event], grid_w: usize, grid_h: usize, geometry: SensorGeometry) -> Self {
        let (w, h) = (geometry.width, geometry.height);
        let cell_x = |px: usize| px * grid_w / w;
        let cell_y = |py: usize| py * grid_h / h;
        let axis = |c: f64, n: usize| -> (usize, usize, f64) {
            let c = c.clamp(0.0, (n - 1) as f64);
            let i0 = (c.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, c - i0 as f64)
        };
        let taps = events
            .iter()
            .map(|e| {
                let (x0, x1, fx) = axis(e.x, w);
                let (y0, y1, fy) = axis(e.y, h);
                let cell = |px: usize, py: usize| (cell_y(py) * grid_w + cell_x(px)) as u32;
                [
                    (cell(x0, y0), (1.0 - fx) * (1.0 - fy)),
                    (cell(x1, y0), fx * (1.0 - fy)),
                    (cell(x0, y1), (1.0 - fx) * fy),
                    (cell(x1, y1), fx * fy),
                ]
            })
            .collect();
        FlowSampler { grid_w, grid_h, taps }
    }

    /// Velocity of every event under `flow`.
    pub fn velocities(&self, flow: &FlowField) -> Vec<(f64, f64)> {
        debug_assert_eq!(flow.width_cells, self.grid_w);
        debug_assert_eq!(flow.height_cells, self.grid_h);
        self.taps
            .iter()
            .map(|taps| {
                let mut v = (0.0, 0.0);
                for &(c, w) in taps {
                    v.0 += w * flow.vx[c as usize];
                    v.1 += w * flow.vy[c as usize];
                }
                v
            })
            .collect()
    }

    /// Accumulates per-event velocity gradients into per-cell gradients.
    pub fn scatter(&self, per_event: &[(f64, f64)], gx: &mut [f64], gy: &mut [f64]) {
        for (taps, g) in self.taps.iter().zip(per_event) {
            for &(c, w) in taps {
                gx[c as usize] += w * g.0;
                gy[c as usize] += w * g.1;
            }
        }
    }

    /// True when no event draws its velocity from `cell`.
    pub fn cell_is_unused(&self, cell: usize) -> bool {
        !self
            .taps
            .iter()
            .any(|t| t.iter().any(|&(c, w)| c as usize == cell && w != 0.0))
    }
}

/// Transports event coordinates to `t_ref` along linear trajectories:
/// `x' = x + v(x) * (t_ref - t)`.
///
/// `flow` is at sensor resolution and is sampled bilinearly at each event's
/// original position. The result keeps the input order and may contain
/// coordinates outside the sensor.
pub fn warp_events(events: &EventSet, flow: &FlowField, t_ref: f64) -> Result<Vec<(f64, f64)>> {
    flow.ensure_finite()?;
    let geometry = SensorGeometry {
        width: flow.width_cells,
        height: flow.height_cells,
    };
    if geometry.width == 0 || geometry.height == 0 {
        return Err(Error::invalid("flow field is empty"));
    }
    let sampler = FlowSampler::new(events.events(), flow.width_cells, flow.height_cells, geometry);
    Ok(warp_with_velocities(events.events(), &sampler.velocities(flow), t_ref))
}

pub(crate) fn warp_with_velocities(events: &[Event], vel: &[(f64, f64)], t_ref: f64) -> Vec<(f64, f64)> {
    events
        .iter()
        .zip(vel)
        .map(|(e, v)| {
            let dt = t_ref - e.t;
            (e.x + v.0 * dt, e.y + v.1 * dt)
        })
        .collect()
}

fn chunk_size(n: usize) -> usize {
    // bounded number of per-chunk image buffers
    par::CHUNK.max(n.div_ceil(32))
}

/// Splats warped coordinates onto the pixel grid.
///
/// Each coordinate deposits unit mass spread by the truncated Gaussian;
/// mass landing off the sensor is dropped. Polarity is not used.
pub fn build_iwe(
    coords: &[(f64, f64)],
    geometry: SensorGeometry,
    cfg: &IweConfig,
    t_ref: f64,
) -> IweImage {
    let kernel = SplatKernel::new(cfg);
    let (w, h) = (geometry.width, geometry.height);
    let len = w * h;
    let parts = par::map_chunks(coords, chunk_size(coords.len()), |chunk| {
        let mut buf = vec![0.0; len];
        let mut sx = AxisStamp::default();
        let mut sy = AxisStamp::default();
        for &(x, y) in chunk {
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            kernel.axis(x, false, &mut sx);
            kernel.axis(y, false, &mut sy);
            for (j, wy) in sy.w.iter().enumerate() {
                let py = sy.start + j as i64;
                if py < 0 || py >= h as i64 || *wy == 0.0 {
                    continue;
                }
                let row = py as usize * w;
                for (i, wx) in sx.w.iter().enumerate() {
                    let px = sx.start + i as i64;
                    if px < 0 || px >= w as i64 {
                        continue;
                    }
                    buf[row + px as usize] += wx * wy;
                }
            }
        }
        buf
    });
    IweImage {
        width: w,
        height: h,
        pixels: par::sum_buffers(parts, len),
        t_ref,
    }
}

/// Image of unwarped events (zero flow).
pub fn build_iue(events: &EventSet, geometry: SensorGeometry, cfg: &IweConfig) -> IweImage {
    let coords: Vec<(f64, f64)> = events.events().iter().map(|e| (e.x, e.y)).collect();
    build_iwe(&coords, geometry, cfg, events.t0())
}

/// Pulls a per-pixel sensitivity image back onto the warped coordinates:
/// returns `sum_p adjoint(p) * dI(p)/dx'` for every coordinate.
pub(crate) fn splat_adjoint(
    coords: &[(f64, f64)],
    adjoint: &[f64],
    geometry: SensorGeometry,
    cfg: &IweConfig,
) -> Vec<(f64, f64)> {
    let kernel = SplatKernel::new(cfg);
    let (w, h) = (geometry.width, geometry.height);
    let parts = par::map_chunks(coords, par::CHUNK, |chunk| {
        let mut sx = AxisStamp::default();
        let mut sy = AxisStamp::default();
        chunk
            .iter()
            .map(|&(x, y)| {
                if !(x.is_finite() && y.is_finite()) {
                    return (0.0, 0.0);
                }
                kernel.axis(x, true, &mut sx);
                kernel.axis(y, true, &mut sy);
                let (mut gx, mut gy) = (0.0, 0.0);
                for j in 0..sy.w.len() {
                    let py = sy.start + j as i64;
                    if py < 0 || py >= h as i64 {
                        continue;
                    }
                    let row = py as usize * w;
                    let (wy, dwy) = (sy.w[j], sy.dw[j]);
                    let (mut acc_w, mut acc_dw) = (0.0, 0.0);
                    for i in 0..sx.w.len() {
                        let px = sx.start + i as i64;
                        if px < 0 || px >= w as i64 {
                            continue;
                        }
                        let a = adjoint[row + px as usize];
                        acc_w += a * sx.w[i];
                        acc_dw += a * sx.dw[i];
                    }
                    gx += acc_dw * wy;
                    gy += acc_w * dwy;
                }
                (gx, gy)
            })
            .collect::<Vec<_>>()
    });
    parts.into_iter().flatten().collect()
}
