//! Run configuration: one TOML tree with every module's settings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::edges::EdgeConfig;
use crate::error::{Error, Result};
use crate::event::SensorGeometry;
use crate::objectives::ObjectiveConfig;
use crate::optimizer::{EstimatorConfig, HandoverConfig, PyramidSpec, SolverConfig};

/// Named hyperparameter sets for the public benchmarks.
pub const PRESETS: [&str; 4] = ["mvsec-indoor", "mvsec-outdoor", "ecd", "dsec"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSize {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub events: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Events per sample window.
    pub n_events: usize,
    /// Sensor size; inferred from frames or events when absent.
    pub sensor: Option<SensorSize>,
    /// Write flow-color PNGs next to the flow files.
    pub viz: bool,
    pub paths: Paths,
    pub objective: ObjectiveConfig,
    pub edges: EdgeConfig,
    pub pyramid: PyramidSpec,
    pub handover: HandoverConfig,
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_events: 30_000,
            sensor: None,
            viz: false,
            paths: Paths::default(),
            objective: ObjectiveConfig::default(),
            edges: EdgeConfig::default(),
            pyramid: PyramidSpec::default(),
            handover: HandoverConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        match name {
            "mvsec-indoor" => {}
            "mvsec-outdoor" => {
                c.n_events = 40_000;
                c.edges.canny_low = 30.0;
                c.edges.canny_high = 80.0;
            }
            "ecd" => {
                c.objective.alpha = 60.0;
                c.objective.beta = 60.0;
                c.objective.gamma = 0.0;
            }
            "dsec" => {
                c.n_events = 1_500_000;
                c.objective.alpha = 2000.0;
                c.objective.beta = 4000.0;
                c.objective.gamma = 0.0;
                c.edges.canny_low = 30.0;
                c.edges.canny_high = 80.0;
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        }
        Ok(c)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => Error::Config(format!("{}: {other}", path.display())),
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_events == 0 {
            return Err(Error::Config("n_events must be >= 1".into()));
        }
        if let Some(s) = self.sensor {
            SensorGeometry::new(s.width, s.height).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.edges.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.estimator().validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            objective: self.objective,
            pyramid: self.pyramid.clone(),
            handover: self.handover.clone(),
            solver: self.solver,
        }
    }

    pub fn geometry(&self) -> Option<SensorGeometry> {
        self.sensor.and_then(|s| SensorGeometry::new(s.width, s.height).ok())
    }
}
