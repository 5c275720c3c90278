//! Dense optical flow from event cameras by edge-informed contrast
//! maximization.
//!
//! Events are warped along per-cell linear trajectories and splatted into an
//! image of warped events (IWE). The estimator maximizes a weighted sum of
//! IWE sharpness, IWE agreement with edge images extracted from grayscale
//! frames, and a total-variation prior, coarse to fine over a flow pyramid.
//!
//! ```no_run
//! use eincm::data::{generate_scene, SceneSpec};
//! use eincm::edges::EdgeConfig;
//! use eincm::optimizer::{multiscale_estimate, EstimatorConfig};
//!
//! let mut sample = generate_scene(&SceneSpec::default())?;
//! sample.extract_edges(&EdgeConfig::default())?;
//! let est = multiscale_estimate(&sample, None, &EstimatorConfig::default())?;
//! println!("{} x {} flow", est.sensor.width_cells, est.sensor.height_cells);
//! # Ok::<(), eincm::Error>(())
//! ```

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod edges;
mod error;
pub mod event;
pub mod metrics;
pub mod objectives;
pub mod optimizer;
mod par;

pub use error::{Error, Result};
pub use event::{Event, EventSet, FlowField, IweConfig, IweImage, SensorGeometry};
