//! Dense BFGS with a strong-Wolfe line search, phrased as maximization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when the largest gradient component falls below this.
    pub gradient_tolerance: f64,
    /// Sufficient-increase constant of the Wolfe conditions.
    pub c1: f64,
    /// Curvature constant of the Wolfe conditions.
    pub c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_search: usize,
    /// Stop when an accepted step improves the objective by less than this
    /// fraction of its magnitude.
    pub value_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 100,
            gradient_tolerance: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
            value_tolerance: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("solver max_iterations must be >= 1"));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::invalid("solver gradient_tolerance must be > 0"));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::invalid("line search needs 0 < c1 < c2 < 1"));
        }
        if !(self.value_tolerance >= 0.0) {
            return Err(Error::invalid("solver value_tolerance must be >= 0"));
        }
        if self.max_line_search == 0 {
            return Err(Error::invalid("solver max_line_search must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    /// No step along the search direction increased the objective.
    LineSearchFailed,
    /// Accepted steps stopped improving the objective.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: SolverStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Wraps the user objective as a minimization of `-f` and counts calls.
struct Negated<F> {
    f: F,
    evaluations: usize,
    last_valid: Vec<f64>,
}

impl<F> Negated<F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.evaluations += 1;
        let (v, g) = (self.f)(x)?;
        if !v.is_finite() || g.iter().any(|g| !g.is_finite()) {
            return Err(Error::Solver {
                message: format!("objective is non-finite after {} evaluations", self.evaluations),
                last_valid: self.last_valid.clone(),
            });
        }
        Ok((-v, g.into_iter().map(|g| -g).collect()))
    }
}

struct Trial {
    alpha: f64,
    phi: f64,
    dphi: f64,
    grad: Vec<f64>,
}

/// Strong-Wolfe line search along `p` (Nocedal and Wright, algorithms 3.5
/// and 3.6). Falls back to the best sufficient-decrease point seen when the
/// curvature condition cannot be met within the evaluation budget.
fn line_search<F>(
    obj: &mut Negated<F>,
    x: &[f64],
    p: &[f64],
    phi0: f64,
    dphi0: f64,
    alpha_init: f64,
    cfg: &SolverConfig,
) -> Result<Option<Trial>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut evals = 0usize;
    let mut best: Option<Trial> = None;
    let probe = |obj: &mut Negated<F>, alpha: f64, best: &mut Option<Trial>| -> Result<Trial> {
        let xa: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + alpha * pi).collect();
        let (phi, grad) = obj.eval(&xa)?;
        let t = Trial {
            alpha,
            phi,
            dphi: dot(&grad, p),
            grad,
        };
        if t.phi <= phi0 + cfg.c1 * alpha * dphi0 && best.as_ref().is_none_or(|b| t.phi < b.phi) {
            *best = Some(Trial {
                alpha: t.alpha,
                phi: t.phi,
                dphi: t.dphi,
                grad: t.grad.clone(),
            });
        }
        Ok(t)
    };

    let armijo = |t: &Trial| t.phi <= phi0 + cfg.c1 * t.alpha * dphi0;
    let curvature = |t: &Trial| t.dphi.abs() <= -cfg.c2 * dphi0;

    let mut prev = Trial {
        alpha: 0.0,
        phi: phi0,
        dphi: dphi0,
        grad: Vec::new(),
    };
    let mut alpha = alpha_init;
    let (mut lo, mut hi);
    loop {
        let t = probe(obj, alpha, &mut best)?;
        evals += 1;
        if !armijo(&t) || (evals > 1 && t.phi >= prev.phi) {
            lo = prev;
            hi = t;
            break;
        }
        if curvature(&t) {
            return Ok(Some(t));
        }
        if t.dphi >= 0.0 {
            lo = t;
            hi = prev;
            break;
        }
        if evals >= cfg.max_line_search {
            return Ok(best);
        }
        prev = t;
        alpha *= 2.0;
    }

    // zoom between lo (satisfies Armijo, lowest so far) and hi
    while evals < cfg.max_line_search {
        let a = interpolate(&lo, &hi);
        let t = probe(obj, a, &mut best)?;
        evals += 1;
        if !armijo(&t) || t.phi >= lo.phi {
            hi = t;
        } else {
            if curvature(&t) {
                return Ok(Some(t));
            }
            if t.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
        if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
    }
    Ok(best)
}

/// Safeguarded cubic interpolation inside the bracket, bisection fallback.
fn interpolate(lo: &Trial, hi: &Trial) -> f64 {
    let (a0, a1) = (lo.alpha, hi.alpha);
    let d = a1 - a0;
    let d1 = lo.dphi + hi.dphi - 3.0 * (lo.phi - hi.phi) / (a0 - a1);
    let rad = d1 * d1 - lo.dphi * hi.dphi;
    let (left, right) = (a0.min(a1), a0.max(a1));
    let margin = 0.1 * (right - left);
    if rad >= 0.0 && d != 0.0 {
        let d2 = d.signum() * rad.sqrt();
        let a = a1 - d * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
        if a.is_finite() && a > left + margin && a < right - margin {
            return a;
        }
    }
    0.5 * (a0 + a1)
}

/// Maximizes `f` from `x0`. `f` returns the value and gradient.
///
/// The iterate only moves on steps that increase the objective, so the
/// returned value is never below `f(x0)`. A non-finite objective aborts with
/// [`Error::Solver`] carrying the last finite iterate.
pub fn bfgs_maximize<F>(f: F, x0: &[f64], cfg: &SolverConfig) -> Result<SolverResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let n = x0.len();
    let mut obj = Negated {
        f,
        evaluations: 0,
        last_valid: x0.to_vec(),
    };
    let mut x = x0.to_vec();
    let (mut phi, mut g) = obj.eval(&x)?;

    // inverse Hessian approximation of -f, row-major
    let mut h = vec![0.0; n * n];
    let reset = |h: &mut [f64], scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = scale;
        }
    };
    reset(&mut h, 1.0);
    let mut first_step = true;
    let mut status = SolverStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        if inf_norm(&g) <= cfg.gradient_tolerance {
            status = SolverStatus::Converged;
            break;
        }
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut dphi0 = dot(&g, &p);
        if !(dphi0 < 0.0) {
            // lost descent: restart from steepest descent
            reset(&mut h, 1.0);
            first_step = true;
            p = g.iter().map(|v| -v).collect();
            dphi0 = dot(&g, &p);
        }
        let alpha_init = if first_step {
            (1.01 / g.iter().map(|v| v * v).sum::<f64>().sqrt()).min(1.0)
        } else {
            1.0
        };
        iterations += 1;
        let Some(step) = line_search(&mut obj, &x, &p, phi, dphi0, alpha_init, cfg)? else {
            status = SolverStatus::LineSearchFailed;
            break;
        };

        let s: Vec<f64> = p.iter().map(|v| step.alpha * v).collect();
        let y: Vec<f64> = step.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        let improvement = phi - step.phi;
        phi = step.phi;
        g = step.grad;
        obj.last_valid.clone_from(&x);

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if first_step {
                reset(&mut h, sy / dot(&y, &y));
            }
            update_inverse_hessian(&mut h, &s, &y, 1.0 / sy);
            first_step = false;
        }
        if inf_norm(&s) == 0.0 {
            status = SolverStatus::LineSearchFailed;
            break;
        }
        if improvement <= cfg.value_tolerance * phi.abs().max(1.0) {
            status = SolverStatus::Stalled;
            break;
        }
    }
    if status == SolverStatus::MaxIterations && inf_norm(&g) <= cfg.gradient_tolerance {
        status = SolverStatus::Converged;
    }

    Ok(SolverResult {
        x,
        value: -phi,
        gradient: g.into_iter().map(|v| -v).collect(),
        iterations,
        evaluations: obj.evaluations,
        status,
    })
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn update_inverse_hessian(h: &mut [f64], s: &[f64], y: &[f64], rho: f64) {
    let n = s.len();
    // hy = H y, yhy = y^T H y
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
