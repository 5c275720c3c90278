//! Endpoint error, outlier percentage and flow warp loss.

use std::io::Write;

use serde::Serialize;

use crate::data::DisplacementField;
use crate::error::{Error, Result};
use crate::event::{build_iue, build_iwe, warp_events, EventSet, FlowField, IweConfig, SensorGeometry};
use crate::objectives::variance_contrast;

/// Per-sample evaluation summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowEval {
    pub aee: f64,
    pub outlier_pct: f64,
    pub n_valid: usize,
}

fn endpoint_errors(
    pred: &DisplacementField,
    gt: &DisplacementField,
    mask: &[bool],
) -> Result<Vec<f64>> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::invalid(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    if mask.len() != gt.width * gt.height {
        return Err(Error::invalid("mask does not match the field size"));
    }
    let errs: Vec<f64> = mask
        .iter()
        .enumerate()
        .filter(|&(_, &m)| m)
        .map(|(i, _)| {
            let du = pred.u[i] as f64 - gt.u[i] as f64;
            let dv = pred.v[i] as f64 - gt.v[i] as f64;
            du.hypot(dv)
        })
        .collect();
    if errs.is_empty() {
        return Err(Error::invalid("evaluation mask is empty"));
    }
    Ok(errs)
}

/// Mean endpoint error over masked pixels (px).
pub fn aee(pred: &DisplacementField, gt: &DisplacementField, mask: &[bool]) -> Result<f64> {
    let e = endpoint_errors(pred, gt, mask)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Percentage of masked pixels whose endpoint error exceeds `threshold`.
pub fn outlier_pct(
    pred: &DisplacementField,
    gt: &DisplacementField,
    mask: &[bool],
    threshold: f64,
) -> Result<f64> {
    let e = endpoint_errors(pred, gt, mask)?;
    let n_out = e.iter().filter(|&&d| d > threshold).count();
    Ok(100.0 * n_out as f64 / e.len() as f64)
}

/// AEE and 3-px outliers in one pass.
pub fn evaluate(pred: &DisplacementField, gt: &DisplacementField, mask: &[bool]) -> Result<FlowEval> {
    let e = endpoint_errors(pred, gt, mask)?;
    let n = e.len();
    Ok(FlowEval {
        aee: e.iter().sum::<f64>() / n as f64,
        outlier_pct: 100.0 * e.iter().filter(|&&d| d > 3.0).count() as f64 / n as f64,
        n_valid: n,
    })
}

/// Flow warp loss: `Var(IWE(flow; t_ref)) / Var(IUE)`.
pub fn fwl(
    events: &EventSet,
    flow: &FlowField,
    geometry: SensorGeometry,
    iwe: &IweConfig,
    t_ref: f64,
) -> Result<f64> {
    if (flow.width_cells, flow.height_cells) != (geometry.width, geometry.height) {
        return Err(Error::invalid("flow warp loss needs a sensor-resolution flow"));
    }
    let base = variance_contrast(&build_iue(events, geometry, iwe));
    if base <= 0.0 {
        return Err(Error::DegenerateDenominator(
            "variance of the unwarped event image is zero".into(),
        ));
    }
    let coords = warp_events(events, flow, t_ref)?;
    Ok(variance_contrast(&build_iwe(&coords, geometry, iwe, t_ref)) / base)
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub sample_id: String,
    pub aee: f64,
    pub outlier_pct: f64,
    /// Absent when no events accompany the prediction.
    pub fwl: Option<f64>,
    pub n_valid: usize,
}

/// Writes `sample_id,aee,outlier_pct,fwl,n_valid` rows followed by a
/// `mean` row averaging the per-sample values.
pub fn write_report<W: Write>(mut out: W, rows: &[ReportRow]) -> Result<()> {
    writeln!(out, "sample_id,aee,outlier_pct,fwl,n_valid")?;
    let fmt_fwl = |f: Option<f64>| f.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{},{}",
            r.sample_id,
            r.aee,
            r.outlier_pct,
            fmt_fwl(r.fwl),
            r.n_valid
        )?;
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let fwls: Vec<f64> = rows.iter().filter_map(|r| r.fwl).collect();
        let mean_fwl = (!fwls.is_empty()).then(|| fwls.iter().sum::<f64>() / fwls.len() as f64);
        writeln!(
            out,
            "mean,{:.6},{:.6},{},{}",
            rows.iter().map(|r| r.aee).sum::<f64>() / n,
            rows.iter().map(|r| r.outlier_pct).sum::<f64>() / n,
            fmt_fwl(mean_fwl),
            rows.iter().map(|r| r.n_valid).sum::<usize>()
        )?;
    }
    Ok(())
}
