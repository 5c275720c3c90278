//! Coarse-to-fine estimation with handover from the previous sample.
//!
//! Every level runs optimize, then handover (when a previous solution
//! exists), then a ×2 repeat upsample into the next level. The finest grid
//! is bilinearly upsampled to sensor resolution at the end.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::event::FlowField;
use crate::objectives::{GridObjective, HybridObjective, ObjectiveConfig, ReferenceTimes};

use super::bfgs::{bfgs_maximize, SolverConfig, SolverStatus};
use super::resample::{downscale_lanczos3, handover, upscale_bilinear_to_sensor, upscale_repeat_to};

/// Flow grid resolutions, coarse to fine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PyramidSpec {
    /// `(width_cells, height_cells)` per level.
    pub levels: Vec<(usize, usize)>,
}

impl Default for PyramidSpec {
    fn default() -> Self {
        PyramidSpec {
            levels: vec![(1, 1), (2, 2), (4, 4), (8, 8), (16, 16)],
        }
    }
}

impl PyramidSpec {
    pub fn validate(&self) -> Result<()> {
        let Some(&(w0, h0)) = self.levels.first() else {
            return Err(Error::invalid("pyramid needs at least one level"));
        };
        if w0 == 0 || h0 == 0 {
            return Err(Error::invalid("pyramid levels must be non-empty grids"));
        }
        for pair in self.levels.windows(2) {
            let ((w, h), (nw, nh)) = (pair[0], pair[1]);
            if nw != 2 * w || nh != 2 * h {
                return Err(Error::invalid(format!(
                    "pyramid level {nw}x{nh} does not double {w}x{h}"
                )));
            }
        }
        Ok(())
    }

    pub fn finest(&self) -> (usize, usize) {
        *self.levels.last().expect("validated pyramid")
    }

    /// Level index counted from the finest (0) up to the coarsest.
    pub fn level_index(&self, position: usize) -> usize {
        self.levels.len() - 1 - position
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandoverStrategy {
    /// Fixed weight at every level.
    Fho,
    /// Solved weight at every level.
    Sho,
    /// Solved at `solve_levels`, fixed elsewhere.
    Fsho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandoverConfig {
    /// Disables handover entirely when false.
    pub enabled: bool,
    pub strategy: HandoverStrategy,
    /// Weight of the previous solution (0.67 suits slow scenes).
    pub fixed_weight: f64,
    /// Level indices (0 = finest) where the weight is solved under FSHO.
    pub solve_levels: Vec<usize>,
    /// Clamp solved weights to `[0, 1]`.
    pub clamp_solved: bool,
}

impl Default for HandoverConfig {
    fn default() -> Self {
        HandoverConfig {
            enabled: true,
            strategy: HandoverStrategy::Fsho,
            fixed_weight: 0.5,
            solve_levels: vec![1, 0],
            clamp_solved: false,
        }
    }
}

impl HandoverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fixed_weight) {
            return Err(Error::invalid("fixed handover weight must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn solves_at(&self, level: usize) -> bool {
        match self.strategy {
            HandoverStrategy::Fho => false,
            HandoverStrategy::Sho => true,
            HandoverStrategy::Fsho => self.solve_levels.contains(&level),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub objective: ObjectiveConfig,
    pub pyramid: PyramidSpec,
    pub handover: HandoverConfig,
    pub solver: SolverConfig,
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        self.pyramid.validate()?;
        self.handover.validate()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Fixed,
    Solved,
    /// An endpoint beat the solved weight.
    Endpoint,
    /// The 1-D solve failed; the fixed weight was used.
    Fallback,
}

/// Result of the 1-D handover weight search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandoverSolve {
    pub w: f64,
    pub value: f64,
    pub converged: bool,
    pub source: WeightSource,
}

/// Maximizes `F(w * previous + (1 - w) * current)` over `w`, from `w = 0.5`.
///
/// The search is unbounded unless `clamp` is set. If either endpoint scores
/// higher than the local optimum found, that endpoint is returned instead.
pub fn solve_handover_weight(
    current: &FlowField,
    previous: &FlowField,
    objective: &GridObjective<'_, '_>,
    solver: &SolverConfig,
    clamp: bool,
) -> Result<HandoverSolve> {
    if !current.same_shape(previous) {
        return Err(Error::invalid("handover fields differ in shape"));
    }
    let total = |w: f64| -> Result<f64> { Ok(objective.value(&handover(current, previous, w)?)?.total) };
    if current == previous {
        return Ok(HandoverSolve {
            w: 0.5,
            value: total(0.5)?,
            converged: true,
            source: WeightSource::Solved,
        });
    }
    let dir: Vec<f64> = previous
        .to_vector()
        .iter()
        .zip(current.to_vector())
        .map(|(p, c)| p - c)
        .collect();
    let f = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (v, g) = objective.value_and_gradient(&handover(current, previous, w[0])?)?;
        let dw: f64 = g.to_vector().iter().zip(&dir).map(|(a, b)| a * b).sum();
        Ok((v.total, vec![dw]))
    };
    let r = bfgs_maximize(f, &[0.5], solver)?;
    let converged = matches!(r.status, SolverStatus::Converged | SolverStatus::Stalled);
    let (mut w, mut value) = (r.x[0], r.value);
    if clamp && !(0.0..=1.0).contains(&w) {
        w = w.clamp(0.0, 1.0);
        value = total(w)?;
    }
    let mut source = WeightSource::Solved;
    for end in [0.0, 1.0] {
        let v = total(end)?;
        if v > value {
            (w, value, source) = (end, v, WeightSource::Endpoint);
        }
    }
    Ok(HandoverSolve {
        w,
        value,
        converged,
        source,
    })
}

/// One record per pyramid level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelDiagnostics {
    /// 0 is the finest level.
    pub level: usize,
    pub width_cells: usize,
    pub height_cells: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Option<SolverStatus>,
    pub objective_before: f64,
    pub objective_after: f64,
    pub objective_after_handover: Option<f64>,
    pub w_ho: Option<f64>,
    pub w_source: Option<WeightSource>,
    pub error: Option<String>,
}

/// Stages in the order they ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "step", content = "level", rename_all = "snake_case")]
pub enum PipelineStep {
    Optimize(usize),
    Handover(usize),
    Upsample(usize),
}

#[derive(Debug, Clone)]
pub struct Estimate {
    /// Finest grid solution, carried into the next sample.
    pub grid: FlowField,
    /// Bilinear upsampling of `grid` to the sensor.
    pub sensor: FlowField,
    pub levels: Vec<LevelDiagnostics>,
    pub trace: Vec<PipelineStep>,
    /// True when correlation was dropped because the sample has no edges.
    pub events_only: bool,
    /// Set when a level's solver failed; the best iterate so far was kept.
    pub failed: bool,
}

impl Estimate {
    /// Writes one JSON object per level.
    pub fn write_diagnostics<W: Write>(&self, mut out: W, sample_id: &str) -> Result<()> {
        for d in &self.levels {
            let mut v = serde_json::to_value(d).map_err(|e| Error::Format(e.to_string()))?;
            v["sample_id"] = serde_json::Value::from(sample_id);
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

fn solver_failure(e: &Error) -> bool {
    matches!(e, Error::Solver { .. })
}

/// Runs the coarse-to-fine estimator on one sample.
///
/// `previous` is the finest grid of the preceding sample; without it the
/// coarsest level starts from zero and no handover happens. Correlation is
/// dropped when the sample carries no edge images.
pub fn multiscale_estimate(
    sample: &Sample,
    previous: Option<&FlowField>,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    cfg.validate()?;
    sample.validate()?;
    let finest = cfg.pyramid.finest();
    if let Some(p) = previous {
        if (p.width_cells, p.height_cells) != finest {
            return Err(Error::invalid(format!(
                "previous solution is {}x{}, finest level is {}x{}",
                p.width_cells, p.height_cells, finest.0, finest.1
            )));
        }
        p.ensure_finite()?;
    }

    let events_only = cfg.objective.beta == 0.0 || sample.edges.is_empty();
    let (obj_cfg, refs) = if events_only {
        (cfg.objective.events_only(), ReferenceTimes::events_only(&sample.events))
    } else {
        (cfg.objective, ReferenceTimes::for_window(&sample.events, &sample.edges))
    };
    let objective = HybridObjective::new(&sample.events, &refs, sample.geometry, obj_cfg)?;
    let handover_on = cfg.handover.enabled && previous.is_some();

    let (w0, h0) = cfg.pyramid.levels[0];
    let mut theta = match previous {
        Some(p) => downscale_lanczos3(p, w0, h0)?,
        None => FlowField::zeros(w0, h0),
    };
    let mut levels = Vec::with_capacity(cfg.pyramid.levels.len());
    let mut trace = Vec::new();
    let mut failed = false;

    for (pos, &(w, h)) in cfg.pyramid.levels.iter().enumerate() {
        let level = cfg.pyramid.level_index(pos);
        let grid = objective.on_grid(w, h);
        let before = grid.value(&theta)?.total;
        let mut diag = LevelDiagnostics {
            level,
            width_cells: w,
            height_cells: h,
            iterations: 0,
            evaluations: 0,
            status: None,
            objective_before: before,
            objective_after: before,
            objective_after_handover: None,
            w_ho: None,
            w_source: None,
            error: None,
        };

        trace.push(PipelineStep::Optimize(level));
        if !failed {
            let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
                let (v, g) = grid.value_and_gradient(&FlowField::from_vector(w, h, x)?)?;
                Ok((v.total, g.to_vector()))
            };
            match bfgs_maximize(f, &theta.to_vector(), &cfg.solver) {
                Ok(r) => {
                    theta = FlowField::from_vector(w, h, &r.x)?;
                    diag.iterations = r.iterations;
                    diag.evaluations = r.evaluations;
                    diag.status = Some(r.status);
                    diag.objective_after = r.value;
                }
                Err(Error::Solver { message, last_valid }) => {
                    failed = true;
                    theta = FlowField::from_vector(w, h, &last_valid)?;
                    diag.objective_after = grid.value(&theta)?.total;
                    diag.error = Some(message);
                }
                Err(e) => return Err(e),
            }
        }

        if handover_on && !failed {
            trace.push(PipelineStep::Handover(level));
            let prev_down = downscale_lanczos3(previous.expect("handover needs previous"), w, h)?;
            let fixed = cfg.handover.fixed_weight;
            let (wt, source) = if cfg.handover.solves_at(level) {
                match solve_handover_weight(&theta, &prev_down, &grid, &cfg.solver, cfg.handover.clamp_solved) {
                    Ok(s) => (s.w, s.source),
                    Err(e) if solver_failure(&e) => {
                        diag.error = Some(format!("handover solve failed: {e}"));
                        (fixed, WeightSource::Fallback)
                    }
                    Err(e) => return Err(e),
                }
            } else {
                (fixed, WeightSource::Fixed)
            };
            theta = handover(&theta, &prev_down, wt)?;
            diag.w_ho = Some(wt);
            diag.w_source = Some(source);
            diag.objective_after_handover = Some(grid.value(&theta)?.total);
        }

        if pos + 1 < cfg.pyramid.levels.len() {
            trace.push(PipelineStep::Upsample(level));
            let (nw, nh) = cfg.pyramid.levels[pos + 1];
            theta = upscale_repeat_to(&theta, nw, nh)?;
        }
        levels.push(diag);
    }

    let sensor = upscale_bilinear_to_sensor(&theta, sample.geometry);
    Ok(Estimate {
        grid: theta,
        sensor,
        levels,
        trace,
        events_only,
        failed,
    })
}
