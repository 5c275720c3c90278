//! Synthetic translating scenes with an idealized DVS event model.
//!
//! Each pixel keeps the log intensity at its last event; whenever the
//! current log intensity moves `contrast_threshold` away from it an event
//! fires, timestamped by linear interpolation within the render step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edges::GrayImage;
use crate::error::{Error, Result};
use crate::event::{Event, EventSet, SensorGeometry};

use super::{DisplacementField, GroundTruth, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    /// A soft-edged vertical bar through the sensor center.
    Bar,
    Checkerboard,
    /// Random Gaussian blobs.
    Texture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub pattern: Pattern,
    /// Pattern velocity in px/s.
    pub velocity: (f64, f64),
    /// Seconds.
    pub duration: f64,
    /// Log-intensity step per event.
    pub contrast_threshold: f64,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Spurious events per pixel per second (0 disables noise).
    pub noise_rate: f64,
    /// Render steps per pixel of travel (at least 100 steps in total).
    pub steps_per_pixel: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            pattern: Pattern::Texture,
            velocity: (60.0, -40.0),
            duration: 0.05,
            contrast_threshold: 0.075,
            width: 64,
            height: 64,
            seed: 7,
            noise_rate: 0.0,
            steps_per_pixel: 20.0,
        }
    }
}

impl SceneSpec {
    pub fn geometry(&self) -> Result<SensorGeometry> {
        SensorGeometry::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        let (vx, vy) = self.velocity;
        if !(vx.is_finite() && vy.is_finite()) {
            return Err(Error::invalid("velocity must be finite"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("duration must be > 0"));
        }
        if !(self.contrast_threshold > 0.0) {
            return Err(Error::invalid("contrast threshold must be > 0"));
        }
        if !(self.noise_rate >= 0.0) {
            return Err(Error::invalid("noise rate must be >= 0"));
        }
        if !(self.steps_per_pixel > 0.0) {
            return Err(Error::invalid("steps per pixel must be > 0"));
        }
        let travel = vx.hypot(vy) * self.duration;
        let half = self.width.min(self.height) as f64 / 2.0;
        if travel >= half {
            return Err(Error::invalid(format!(
                "travel of {travel:.3} px leaves the frame (limit {half} px)"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    cx: f64,
    cy: f64,
    inv_two_s2: f64,
    cutoff2: f64,
    amp: f64,
}

/// Scene intensity in `[0.1, 1]`, defined over the whole plane.
#[derive(Debug, Clone)]
struct Intensity {
    pattern: Pattern,
    width: f64,
    blobs: Vec<Blob>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Intensity {
    fn new(spec: &SceneSpec) -> Self {
        let mut blobs = Vec::new();
        if spec.pattern == Pattern::Texture {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let margin = spec.velocity.0.hypot(spec.velocity.1) * spec.duration + 12.0;
            let (x0, x1) = (-margin, spec.width as f64 + margin);
            let (y0, y1) = (-margin, spec.height as f64 + margin);
            // roughly one blob per 30 px^2
            let count = ((x1 - x0) * (y1 - y0) / 30.0).round() as usize;
            for _ in 0..count {
                let s: f64 = rng.random_range(1.5..3.5);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                blobs.push(Blob {
                    cx: rng.random_range(x0..x1),
                    cy: rng.random_range(y0..y1),
                    inv_two_s2: 1.0 / (2.0 * s * s),
                    cutoff2: (4.0 * s) * (4.0 * s),
                    amp: sign * rng.random_range(0.25..0.5),
                });
            }
        }
        Intensity {
            pattern: spec.pattern,
            width: spec.width as f64,
            blobs,
        }
    }

    /// Intensity at scene coordinate `(x, y)` (pattern frame, not sensor).
    fn at(&self, x: f64, y: f64) -> f64 {
        match self.pattern {
            Pattern::Bar => {
                let c = self.width / 2.0;
                let half = 4.0;
                0.2 + 0.7 * (logistic((x - (c - half)) / 0.7) - logistic((x - (c + half)) / 0.7))
            }
            Pattern::Checkerboard => {
                let sq = 8.0;
                let k = 3.0;
                let sx = (k * (std::f64::consts::PI * x / sq).sin()).tanh();
                let sy = (k * (std::f64::consts::PI * y / sq).sin()).tanh();
                0.55 + 0.4 * sx * sy
            }
            Pattern::Texture => {
                let mut v = 0.5;
                for b in &self.blobs {
                    let d2 = (x - b.cx).powi(2) + (y - b.cy).powi(2);
                    if d2 < b.cutoff2 {
                        v += b.amp * (-d2 * b.inv_two_s2).exp();
                    }
                }
                v.clamp(0.1, 1.0)
            }
        }
    }
}

/// Events of a scene, sorted by `(t, y, x)`; empty when nothing moves.
pub fn simulate_events(spec: &SceneSpec) -> Result<Vec<Event>> {
    spec.validate()?;
    let scene = Intensity::new(spec);
    let (vx, vy) = spec.velocity;
    let (w, h) = (spec.width, spec.height);
    let travel = vx.hypot(vy) * spec.duration;
    let steps = ((travel * spec.steps_per_pixel).ceil() as usize).max(100);
    let dt = spec.duration / steps as f64;
    let c = spec.contrast_threshold;

    let mut events = Vec::new();
    if travel > 0.0 {
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64, y as f64);
                let log_at = |t: f64| scene.at(px - vx * t, py - vy * t).ln();
                let mut reference = log_at(0.0);
                let mut prev = reference;
                for k in 1..=steps {
                    let t_prev = (k - 1) as f64 * dt;
                    let cur = log_at(k as f64 * dt);
                    while cur - reference >= c {
                        reference += c;
                        let t = t_prev + (reference - prev) / (cur - prev) * dt;
                        events.push(Event::new(px, py, t, 1));
                    }
                    while reference - cur >= c {
                        reference -= c;
                        let t = t_prev + (prev - reference) / (prev - cur) * dt;
                        events.push(Event::new(px, py, t, -1));
                    }
                    prev = cur;
                }
            }
        }
    }

    if spec.noise_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
        let n = (spec.noise_rate * (w * h) as f64 * spec.duration).round() as usize;
        for _ in 0..n {
            let x = rng.random_range(0..w) as f64;
            let y = rng.random_range(0..h) as f64;
            let t = rng.random_range(0.0..spec.duration);
            let p = if rng.random::<bool>() { 1 } else { -1 };
            events.push(Event::new(x, y, t, p));
        }
    }

    events.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    Ok(events)
}

/// Renders the scene as an 8-bit-range gray frame at time `t`.
pub fn render_frame(spec: &SceneSpec, t: f64) -> Result<GrayImage> {
    spec.validate()?;
    render(&Intensity::new(spec), spec, t)
}

fn render(scene: &Intensity, spec: &SceneSpec, t: f64) -> Result<GrayImage> {
    let (vx, vy) = spec.velocity;
    let mut pixels = Vec::with_capacity(spec.width * spec.height);
    for y in 0..spec.height {
        for x in 0..spec.width {
            pixels.push(255.0 * scene.at(x as f64 - vx * t, y as f64 - vy * t));
        }
    }
    GrayImage::new(spec.width, spec.height, pixels, t)
}

/// Generates events, three frames (at the first, middle and last event
/// time) and ground-truth displacement over `duration`.
///
/// The ground-truth mask keeps pixels where the pattern has a visible
/// intensity gradient at mid-window.
pub fn generate_scene(spec: &SceneSpec) -> Result<Sample> {
    Ok(generate_sequence(spec, 1)?.remove(0))
}

/// Simulates `windows` consecutive windows of `duration` seconds each and
/// returns one sample per window, each with its own frames and ground truth.
pub fn generate_sequence(spec: &SceneSpec, windows: usize) -> Result<Vec<Sample>> {
    if windows == 0 {
        return Err(Error::invalid("need at least one window"));
    }
    let total = SceneSpec {
        duration: spec.duration * windows as f64,
        ..spec.clone()
    };
    let events = simulate_events(&total)?;
    if events.is_empty() {
        return Err(Error::NoEvents(format!(
            "velocity {:?} over {} s produced no threshold crossings",
            spec.velocity, total.duration
        )));
    }
    let geometry = spec.geometry()?;
    let scene = Intensity::new(&total);
    let (vx, vy) = spec.velocity;
    let displacement = DisplacementField::constant(
        spec.width,
        spec.height,
        (vx * spec.duration) as f32,
        (vy * spec.duration) as f32,
    );

    let mut samples = Vec::with_capacity(windows);
    let mut rest = events.as_slice();
    for k in 0..windows {
        let end = if k + 1 == windows {
            rest.len()
        } else {
            let t_end = (k + 1) as f64 * spec.duration;
            rest.partition_point(|e| e.t < t_end)
        };
        let (chunk, tail) = rest.split_at(end);
        rest = tail;
        if chunk.is_empty() {
            return Err(Error::NoEvents(format!("window {k} has no events")));
        }
        let events = EventSet::with_geometry(chunk.to_vec(), geometry)?;
        let frames = [events.t0(), events.t_mid(), events.t1()]
            .iter()
            .map(|&t| render(&scene, spec, t))
            .collect::<Result<Vec<_>>>()?;

        let t_mid = (k as f64 + 0.5) * spec.duration;
        let mut mask = Vec::with_capacity(geometry.pixel_count());
        for y in 0..spec.height {
            for x in 0..spec.width {
                let (sx, sy) = (x as f64 - vx * t_mid, y as f64 - vy * t_mid);
                let gx = scene.at(sx + 0.5, sy) - scene.at(sx - 0.5, sy);
                let gy = scene.at(sx, sy + 0.5) - scene.at(sx, sy - 0.5);
                mask.push(gx.hypot(gy) > 1e-3);
            }
        }
        let mut sample = Sample::from_events(events, geometry).with_frames(frames)?;
        sample.gt = Some(GroundTruth {
            displacement: displacement.clone(),
            mask,
            dt: spec.duration,
        });
        samples.push(sample);
    }
    Ok(samples)
}
