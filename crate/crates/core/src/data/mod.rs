//! Samples and their on-disk formats, plus the synthetic scene generator.

mod color;
mod events_io;
mod flow_io;
mod synth;

use serde::{Deserialize, Serialize};

use crate::edges::{extract_edges, EdgeConfig, EdgeImage, GrayImage};
use crate::error::{Error, Result};
use crate::event::{EventSet, FlowField, SensorGeometry};

pub use color::{flow_to_color, write_flow_png};
pub use events_io::{load_events_text, select_window, split_windows, write_events_text};
pub use flow_io::{read_flow, write_flow, UNKNOWN_FLOW};
pub use synth::{generate_scene, generate_sequence, render_frame, simulate_events, Pattern, SceneSpec};

/// Per-pixel displacement in pixels, stored single precision like the
/// `.flo` format.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl DisplacementField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::invalid(format!(
                "displacement channels do not fill {width}x{height}"
            )));
        }
        Ok(DisplacementField { width, height, u, v })
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        DisplacementField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    /// Displacement over `dt` seconds of a sensor-resolution velocity field.
    pub fn from_velocity(flow: &FlowField, dt: f64) -> Self {
        DisplacementField {
            width: flow.width_cells,
            height: flow.height_cells,
            u: flow.vx.iter().map(|v| (v * dt) as f32).collect(),
            v: flow.vy.iter().map(|v| (v * dt) as f32).collect(),
        }
    }

    /// Pixels with a known (finite, non-sentinel) displacement.
    pub fn known_mask(&self) -> Vec<bool> {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u.is_finite() && v.is_finite() && u.abs() < 1e9 && v.abs() < 1e9)
            .collect()
    }
}

/// Ground-truth displacement over `dt` seconds with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub displacement: DisplacementField,
    pub mask: Vec<bool>,
    pub dt: f64,
}

/// One optimization unit: events, frames/edges inside the window, and
/// optional ground truth.
#[derive(Debug, Clone)]
pub struct Sample {
    pub events: EventSet,
    pub frames: Vec<GrayImage>,
    pub edges: Vec<EdgeImage>,
    pub frame_times: Vec<f64>,
    pub gt: Option<GroundTruth>,
    pub geometry: SensorGeometry,
}

impl Sample {
    /// Events-only sample.
    pub fn from_events(events: EventSet, geometry: SensorGeometry) -> Self {
        Sample {
            events,
            frames: Vec::new(),
            edges: Vec::new(),
            frame_times: Vec::new(),
            gt: None,
            geometry,
        }
    }

    /// Keeps the frames whose timestamps fall within the event window.
    pub fn with_frames(mut self, frames: Vec<GrayImage>) -> Result<Self> {
        let (t0, t1) = (self.events.t0(), self.events.t1());
        let mut frames: Vec<GrayImage> = frames.into_iter().filter(|f| f.t >= t0 && f.t <= t1).collect();
        frames.sort_by(|a, b| a.t.total_cmp(&b.t));
        for f in &frames {
            if f.width != self.geometry.width || f.height != self.geometry.height {
                return Err(Error::invalid(format!(
                    "frame at t={} is {}x{}, sensor is {}x{}",
                    f.t, f.width, f.height, self.geometry.width, self.geometry.height
                )));
            }
        }
        self.frame_times = frames.iter().map(|f| f.t).collect();
        self.frames = frames;
        self.edges.clear();
        Ok(self)
    }

    /// Runs the edge pipeline on every frame.
    pub fn extract_edges(&mut self, cfg: &EdgeConfig) -> Result<()> {
        self.edges = self
            .frames
            .iter()
            .map(|f| extract_edges(f, cfg))
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.events.is_empty() {
            return Err(Error::invalid("sample has no events"));
        }
        if self.frame_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("frame timestamps are not sorted"));
        }
        let (t0, t1) = (self.events.t0(), self.events.t1());
        if self.frame_times.iter().any(|&t| t < t0 || t > t1) {
            return Err(Error::invalid("frame timestamp outside the event window"));
        }
        if !self.edges.is_empty() && self.edges.len() != self.frames.len() {
            return Err(Error::invalid("edge images do not match frames one to one"));
        }
        Ok(())
    }
}

/// Echo of a generated scene, written next to its files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub spec: SceneSpec,
    pub n_events: usize,
    pub t0: f64,
    pub t1: f64,
    pub frame_times: Vec<f64>,
}
