//! Per-level BFGS, flow resampling, handover and the coarse-to-fine driver.

mod bfgs;
mod multiscale;
mod resample;

pub use bfgs::{bfgs_maximize, SolverConfig, SolverResult, SolverStatus};
pub use multiscale::{
    multiscale_estimate, solve_handover_weight, EstimatorConfig, Estimate, HandoverConfig,
    HandoverSolve, HandoverStrategy, LevelDiagnostics, PipelineStep, PyramidSpec, WeightSource,
};
pub use resample::{
    downscale_lanczos3, handover, upscale_bilinear_to_sensor, upscale_repeat, upscale_repeat_to,
};
