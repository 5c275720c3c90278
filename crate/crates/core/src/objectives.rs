//! Scalar objectives over a flow field: IWE contrast, edge correlation,
//! total-variation regularization and their weighted combination.
//!
//! All objectives are maximized. The relative forms divide by the value the
//! same measure takes on the image of unwarped events, so a zero flow scores
//! exactly `1` for contrast and `-1` for correlation.

use serde::{Deserialize, Serialize};

use crate::edges::EdgeImage;
use crate::error::{Error, Result};
use crate::event::{
    build_iue, build_iwe, splat_adjoint, warp_with_velocities, EventSet, FlowField, FlowSampler,
    IweConfig, IweImage, SensorGeometry,
};
use crate::par;

/// Reference times at which the objectives are evaluated.
#[derive(Debug, Clone, Default)]
pub struct ReferenceTimes {
    pub contrast_refs: Vec<f64>,
    pub correlation_refs: Vec<(f64, EdgeImage)>,
}

impl ReferenceTimes {
    /// Contrast at the frame timestamps when any fall inside the event
    /// window, otherwise at `{t0, t_mid, t1}`; correlation at every edge image.
    pub fn for_window(events: &EventSet, edges: &[EdgeImage]) -> Self {
        let (t0, t1) = (events.t0(), events.t1());
        let inside: Vec<f64> = edges
            .iter()
            .map(|e| e.t)
            .filter(|&t| t >= t0 && t <= t1)
            .collect();
        let contrast_refs = if inside.is_empty() {
            vec![t0, events.t_mid(), t1]
        } else {
            inside
        };
        ReferenceTimes {
            contrast_refs,
            correlation_refs: edges.iter().map(|e| (e.t, e.clone())).collect(),
        }
    }

    pub fn events_only(events: &EventSet) -> Self {
        ReferenceTimes {
            contrast_refs: vec![events.t0(), events.t_mid(), events.t1()],
            correlation_refs: Vec::new(),
        }
    }
}

/// Weights of the hybrid objective `alpha * f_rel + beta * g_rel + gamma * R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub iwe: IweConfig,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            alpha: 20.0,
            beta: 35.0,
            gamma: 0.0025,
            iwe: IweConfig::default(),
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.alpha) && ok(self.beta) && ok(self.gamma)) {
            return Err(Error::invalid("objective weights must be finite and >= 0"));
        }
        if self.alpha + self.beta <= 0.0 {
            return Err(Error::invalid("alpha + beta must be > 0"));
        }
        self.iwe.validate()
    }

    /// Events-only variant (`beta = 0`).
    pub fn events_only(&self) -> Self {
        ObjectiveConfig { beta: 0.0, ..*self }
    }
}

/// Variance of the image values, `mean((I - mean(I))^2)`.
pub fn variance_contrast(iwe: &IweImage) -> f64 {
    let n = iwe.pixels.len();
    if n == 0 {
        return 0.0;
    }
    let mean = iwe.pixels.iter().sum::<f64>() / n as f64;
    iwe.pixels.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
}

fn check_gradient_size(width: usize, height: usize) -> Result<()> {
    if width < 3 || height < 3 {
        return Err(Error::invalid(format!(
            "gradient contrast needs at least a 3x3 image, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Central-difference gradients with replicated borders.
fn central_gradients(pixels: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            gx[y * w + x] = 0.5 * (pixels[y * w + xr] - pixels[y * w + xl]);
            gy[y * w + x] = 0.5 * (pixels[yd * w + x] - pixels[yu * w + x]);
        }
    }
    (gx, gy)
}

/// Mean squared gradient magnitude of the IWE.
pub fn gradient_magnitude_contrast(iwe: &IweImage) -> Result<f64> {
    check_gradient_size(iwe.width, iwe.height)?;
    Ok(mean_sq_gradient(&iwe.pixels, iwe.width, iwe.height))
}

fn mean_sq_gradient(pixels: &[f64], w: usize, h: usize) -> f64 {
    let (gx, gy) = central_gradients(pixels, w, h);
    let s: f64 = gx.iter().zip(&gy).map(|(a, b)| a * a + b * b).sum();
    s / (w * h) as f64
}

/// Adds `scale * dG/dI` to `out`.
fn add_mean_sq_gradient_adjoint(pixels: &[f64], w: usize, h: usize, scale: f64, out: &mut [f64]) {
    let (gx, gy) = central_gradients(pixels, w, h);
    // dG/dI_q = (1/N) sum_p g_p (d[q == right(p)] - d[q == left(p)])
    let c = scale / (w * h) as f64;
    for y in 0..h {
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let ax = c * gx[y * w + x];
            let ay = c * gy[y * w + x];
            out[y * w + xr] += ax;
            out[y * w + xl] -= ax;
            out[yd * w + x] += ay;
            out[yu * w + x] -= ay;
        }
    }
}

fn max_normalized(pixels: &[f64]) -> Vec<f64> {
    let m = pixels.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        pixels.iter().map(|v| v / m).collect()
    } else {
        pixels.to_vec()
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Mean squared error between the max-normalized IWE and edge image.
pub fn mse_correlation(iwe: &IweImage, edge: &EdgeImage) -> Result<f64> {
    if iwe.width != edge.width || iwe.height != edge.height {
        return Err(Error::invalid(format!(
            "iwe is {}x{} but edge image is {}x{}",
            iwe.width, iwe.height, edge.width, edge.height
        )));
    }
    Ok(mse(&max_normalized(&iwe.pixels), &max_normalized(&edge.pixels)))
}

/// Adds `scale * dMSE/dI` where MSE is taken against the already
/// normalized `edge_norm` and `I` is max-normalized internally.
fn add_mse_adjoint(pixels: &[f64], edge_norm: &[f64], scale: f64, out: &mut [f64]) {
    let n = pixels.len() as f64;
    let (argmax, m) = pixels
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if m <= 0.0 {
        return;
    }
    let inv_m = 1.0 / m;
    let mut through_max = 0.0;
    for (i, (&p, &e)) in pixels.iter().zip(edge_norm).enumerate() {
        let r = 2.0 / n * (p * inv_m - e);
        out[i] += scale * r * inv_m;
        through_max += r * p * inv_m;
    }
    // the normalizer itself depends on the brightest pixel
    out[argmax] -= scale * through_max * inv_m;
}

/// Negated anisotropic total variation of the grid (forward differences,
/// both channels).
pub fn tv_regularizer(flow: &FlowField) -> f64 {
    -(total_variation(&flow.vx, flow.width_cells, flow.height_cells)
        + total_variation(&flow.vy, flow.width_cells, flow.height_cells))
}

fn total_variation(v: &[f64], w: usize, h: usize) -> f64 {
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            let c = v[y * w + x];
            if x + 1 < w {
                s += (v[y * w + x + 1] - c).abs();
            }
            if y + 1 < h {
                s += (v[(y + 1) * w + x] - c).abs();
            }
        }
    }
    s
}

/// Adds `scale * d(-TV)/dv`, using 0 as the subgradient at a kink.
fn add_tv_gradient(v: &[f64], w: usize, h: usize, scale: f64, out: &mut [f64]) {
    let sign = |d: f64| {
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)].into_iter().flatten() {
                let s = sign(v[j] - v[i]);
                out[j] -= scale * s;
                out[i] += scale * s;
            }
        }
    }
}

/// Breakdown of one objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub total: f64,
    pub f_rel: f64,
    /// `None` in events-only mode.
    pub g_rel: Option<f64>,
    pub regularizer: f64,
}

#[derive(Debug, Clone)]
struct CorrelationTerm {
    edge_norm: Vec<f64>,
    mse0: f64,
}

/// All terms sharing one reference time.
#[derive(Debug, Clone)]
struct TimeTerm {
    t: f64,
    contrast_count: usize,
    correlations: Vec<CorrelationTerm>,
}

/// Per-term output of one reference time.
struct TermResult {
    contrast: f64,
    mse_ratios: Vec<f64>,
    per_event: Option<Vec<(f64, f64)>>,
}

/// The hybrid objective bound to one sample; normalizers are computed once.
#[derive(Debug, Clone)]
pub struct HybridObjective<'a> {
    events: &'a EventSet,
    geometry: SensorGeometry,
    cfg: ObjectiveConfig,
    terms: Vec<TimeTerm>,
    n_contrast: usize,
    n_correlation: usize,
    g0: f64,
}

impl<'a> HybridObjective<'a> {
    pub fn new(
        events: &'a EventSet,
        refs: &ReferenceTimes,
        geometry: SensorGeometry,
        cfg: ObjectiveConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if events.is_empty() {
            return Err(Error::invalid("objective needs at least one event"));
        }
        check_gradient_size(geometry.width, geometry.height)?;
        let use_contrast = cfg.alpha > 0.0;
        let use_correlation = cfg.beta > 0.0;
        if use_contrast && refs.contrast_refs.is_empty() {
            return Err(Error::invalid("no contrast reference times"));
        }
        if use_correlation && refs.correlation_refs.is_empty() {
            return Err(Error::invalid(
                "beta > 0 requires at least one correlation reference (edge image)",
            ));
        }

        let iue = build_iue(events, geometry, &cfg.iwe);
        let mut terms: Vec<TimeTerm> = Vec::new();
        let slot = |terms: &mut Vec<TimeTerm>, t: f64| -> usize {
            match terms.iter().position(|x| x.t == t) {
                Some(i) => i,
                None => {
                    terms.push(TimeTerm {
                        t,
                        contrast_count: 0,
                        correlations: Vec::new(),
                    });
                    terms.len() - 1
                }
            }
        };

        let mut g0 = 0.0;
        if use_contrast {
            g0 = mean_sq_gradient(&iue.pixels, geometry.width, geometry.height);
            if g0 <= 0.0 {
                return Err(Error::DegenerateDenominator(
                    "gradient contrast of the unwarped event image is zero".into(),
                ));
            }
            for &t in &refs.contrast_refs {
                let i = slot(&mut terms, t);
                terms[i].contrast_count += 1;
            }
        }
        if use_correlation {
            let iue_norm = max_normalized(&iue.pixels);
            for (t, edge) in &refs.correlation_refs {
                if edge.width != geometry.width || edge.height != geometry.height {
                    return Err(Error::invalid(format!(
                        "edge image at t={t} is {}x{}, sensor is {}x{}",
                        edge.width, edge.height, geometry.width, geometry.height
                    )));
                }
                let edge_norm = max_normalized(&edge.pixels);
                let mse0 = mse(&iue_norm, &edge_norm);
                if mse0 <= 0.0 {
                    return Err(Error::DegenerateDenominator(format!(
                        "unwarped correlation error at t={t} is zero"
                    )));
                }
                let i = slot(&mut terms, *t);
                terms[i].correlations.push(CorrelationTerm { edge_norm, mse0 });
            }
        }

        Ok(HybridObjective {
            events,
            geometry,
            cfg,
            n_contrast: if use_contrast { refs.contrast_refs.len() } else { 0 },
            n_correlation: if use_correlation { refs.correlation_refs.len() } else { 0 },
            terms,
            g0,
        })
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.cfg
    }

    pub fn events(&self) -> &EventSet {
        self.events
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    /// Binds the objective to a flow grid resolution.
    pub fn on_grid(&self, width_cells: usize, height_cells: usize) -> GridObjective<'_, 'a> {
        GridObjective {
            objective: self,
            sampler: FlowSampler::new(self.events.events(), width_cells, height_cells, self.geometry),
        }
    }

    /// Evaluates at any grid resolution.
    pub fn value(&self, flow: &FlowField) -> Result<ObjectiveValue> {
        self.on_grid(flow.width_cells, flow.height_cells).value(flow)
    }

    pub fn value_and_gradient(&self, flow: &FlowField) -> Result<(ObjectiveValue, FlowField)> {
        self.on_grid(flow.width_cells, flow.height_cells)
            .value_and_gradient(flow)
    }

    fn evaluate_term(&self, term: &TimeTerm, vel: &[(f64, f64)], with_gradient: bool) -> TermResult {
        let (w, h) = (self.geometry.width, self.geometry.height);
        let ev = self.events.events();
        let coords = warp_with_velocities(ev, vel, term.t);
        let iwe = build_iwe(&coords, self.geometry, &self.cfg.iwe, term.t);

        let contrast = if term.contrast_count > 0 {
            mean_sq_gradient(&iwe.pixels, w, h)
        } else {
            0.0
        };
        let iwe_norm = if term.correlations.is_empty() {
            Vec::new()
        } else {
            max_normalized(&iwe.pixels)
        };
        let mse_ratios: Vec<f64> = term
            .correlations
            .iter()
            .map(|c| mse(&iwe_norm, &c.edge_norm) / c.mse0)
            .collect();

        let per_event = with_gradient.then(|| {
            let mut adjoint = vec![0.0; w * h];
            if term.contrast_count > 0 {
                let scale =
                    self.cfg.alpha * term.contrast_count as f64 / (self.n_contrast as f64 * self.g0);
                add_mean_sq_gradient_adjoint(&iwe.pixels, w, h, scale, &mut adjoint);
            }
            for c in &term.correlations {
                let scale = -self.cfg.beta / (self.n_correlation as f64 * c.mse0);
                add_mse_adjoint(&iwe.pixels, &c.edge_norm, scale, &mut adjoint);
            }
            let g = splat_adjoint(&coords, &adjoint, self.geometry, &self.cfg.iwe);
            // dx'/dv = (t_ref - t_k)
            g.into_iter()
                .zip(ev)
                .map(|(g, e)| {
                    let dt = term.t - e.t;
                    (g.0 * dt, g.1 * dt)
                })
                .collect()
        });

        TermResult {
            contrast,
            mse_ratios,
            per_event,
        }
    }

    fn evaluate(
        &self,
        sampler: &FlowSampler,
        flow: &FlowField,
        with_gradient: bool,
    ) -> Result<(ObjectiveValue, Option<FlowField>)> {
        if flow.width_cells != sampler.grid_w || flow.height_cells != sampler.grid_h {
            return Err(Error::invalid(format!(
                "flow is {}x{}, objective is bound to {}x{}",
                flow.width_cells, flow.height_cells, sampler.grid_w, sampler.grid_h
            )));
        }
        flow.ensure_finite()?;
        let vel = sampler.velocities(flow);
        let results = par::map_range(self.terms.len(), |i| {
            self.evaluate_term(&self.terms[i], &vel, with_gradient)
        });

        let mut contrast_sum = 0.0;
        let mut ratio_sum = 0.0;
        for (term, r) in self.terms.iter().zip(&results) {
            contrast_sum += term.contrast_count as f64 * r.contrast;
            ratio_sum += r.mse_ratios.iter().sum::<f64>();
        }
        let f_rel = if self.n_contrast > 0 {
            contrast_sum / (self.n_contrast as f64 * self.g0)
        } else {
            0.0
        };
        let g_rel = (self.n_correlation > 0).then(|| -ratio_sum / self.n_correlation as f64);
        let regularizer = tv_regularizer(flow);
        let total = self.cfg.alpha * f_rel
            + self.cfg.beta * g_rel.unwrap_or(0.0)
            + self.cfg.gamma * regularizer;
        let value = ObjectiveValue {
            total,
            f_rel,
            g_rel,
            regularizer,
        };

        if !with_gradient {
            return Ok((value, None));
        }
        let mut per_event = vec![(0.0, 0.0); vel.len()];
        for r in results {
            for (acc, g) in per_event.iter_mut().zip(r.per_event.unwrap_or_default()) {
                acc.0 += g.0;
                acc.1 += g.1;
            }
        }
        let n = flow.cell_count();
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        sampler.scatter(&per_event, &mut gx, &mut gy);
        if self.cfg.gamma > 0.0 {
            let (w, h) = (flow.width_cells, flow.height_cells);
            add_tv_gradient(&flow.vx, w, h, self.cfg.gamma, &mut gx);
            add_tv_gradient(&flow.vy, w, h, self.cfg.gamma, &mut gy);
        }
        Ok((value, Some(FlowField::new(flow.width_cells, flow.height_cells, gx, gy)?)))
    }
}

/// A [`HybridObjective`] bound to one flow grid resolution.
#[derive(Debug, Clone)]
pub struct GridObjective<'o, 'a> {
    objective: &'o HybridObjective<'a>,
    sampler: FlowSampler,
}

impl GridObjective<'_, '_> {
    pub fn width_cells(&self) -> usize {
        self.sampler.grid_w
    }

    pub fn height_cells(&self) -> usize {
        self.sampler.grid_h
    }

    pub fn value(&self, flow: &FlowField) -> Result<ObjectiveValue> {
        Ok(self.objective.evaluate(&self.sampler, flow, false)?.0)
    }

    pub fn value_and_gradient(&self, flow: &FlowField) -> Result<(ObjectiveValue, FlowField)> {
        let (v, g) = self.objective.evaluate(&self.sampler, flow, true)?;
        Ok((v, g.expect("gradient requested")))
    }

    /// True when no event reads its velocity from `cell`.
    pub fn cell_is_unused(&self, cell: usize) -> bool {
        self.sampler.cell_is_unused(cell)
    }
}

/// Multireference relative contrast `sum_j G(flow; t_j) / (N * G(0))`.
pub fn relative_contrast(
    events: &EventSet,
    flow: &FlowField,
    refs: &ReferenceTimes,
    geometry: SensorGeometry,
    iwe: &IweConfig,
) -> Result<f64> {
    let cfg = ObjectiveConfig {
        alpha: 1.0,
        beta: 0.0,
        gamma: 0.0,
        iwe: *iwe,
    };
    Ok(HybridObjective::new(events, refs, geometry, cfg)?.value(flow)?.f_rel)
}

/// Multireference relative correlation `-(1/N) sum_j MSE(flow; t_j) / MSE(0; t_j)`.
pub fn relative_correlation(
    events: &EventSet,
    flow: &FlowField,
    refs: &ReferenceTimes,
    geometry: SensorGeometry,
    iwe: &IweConfig,
) -> Result<f64> {
    let cfg = ObjectiveConfig {
        alpha: 0.0,
        beta: 1.0,
        gamma: 0.0,
        iwe: *iwe,
    };
    let v = HybridObjective::new(events, refs, geometry, cfg)?.value(flow)?;
    Ok(v.g_rel.expect("beta > 0"))
}

/// `alpha * f_rel + beta * g_rel + gamma * R`; the correlation term is
/// skipped entirely when `beta == 0`.
pub fn hybrid_objective(
    events: &EventSet,
    flow: &FlowField,
    refs: &ReferenceTimes,
    geometry: SensorGeometry,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    Ok(HybridObjective::new(events, refs, geometry, *cfg)?.value(flow)?.total)
}

/// Analytic gradient of [`hybrid_objective`] with respect to every flow cell.
pub fn objective_gradient(
    events: &EventSet,
    flow: &FlowField,
    refs: &ReferenceTimes,
    geometry: SensorGeometry,
    cfg: &ObjectiveConfig,
) -> Result<FlowField> {
    Ok(HybridObjective::new(events, refs, geometry, *cfg)?
        .value_and_gradient(flow)?
        .1)
}
