//! Variable projection over the decay parameters.
//!
//! The linear block is eliminated by the thin QR, leaving the reduced objective
//! `H(lambda) = ||y - Psi Psi^T y||^2`. The outer search is a log-spaced grid
//! scan followed by a bounded Nelder-Mead polish in `(ln lambda_1, ln lambda_2)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{NssError, Result};
use crate::nss::{check_lambda, design_values, DesignMatrix, MaturityGrid};
use crate::ortho::{inner_step_with, qr_positive, InnerFit, Selection};
use crate::par::Execution;

/// Feasible box for `lambda` (1/years).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Default for LambdaBox {
    fn default() -> Self {
        Self {
            lo: [0.02, 0.02],
            hi: [5.0, 5.0],
        }
    }
}

impl LambdaBox {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        for j in 0..2 {
            if !(lo[j] > 0.0 && lo[j] < hi[j] && hi[j].is_finite()) {
                return Err(NssError::Domain(format!(
                    "lambda box needs 0 < lo < hi, got lo = {:?}, hi = {:?}",
                    lo, hi
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, lambda: [f64; 2]) -> bool {
        (0..2).all(|j| lambda[j] >= self.lo[j] && lambda[j] <= self.hi[j])
    }

    /// Clamps a point given in `(ln lambda_1, ln lambda_2)` into the box.
    pub fn clamp_log(&self, z: [f64; 2]) -> [f64; 2] {
        [
            z[0].clamp(self.lo[0].ln(), self.hi[0].ln()),
            z[1].clamp(self.lo[1].ln(), self.hi[1].ln()),
        ]
    }

    /// `n` log-spaced points per axis, endpoints included.
    pub fn axis(&self, j: usize, n: usize) -> Vec<f64> {
        let (a, b) = (self.lo[j].ln(), self.hi[j].ln());
        if n == 1 {
            return vec![(0.5 * (a + b)).exp()];
        }
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

/// Outer optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterConfig {
    /// Grid points per axis of the coarse scan.
    pub grid_points: usize,
    /// Simplex diameter (in log lambda) at which Nelder-Mead stops.
    pub diameter_tol: f64,
    pub max_iter: usize,
    /// Warm fits fall back to a global fit when their objective exceeds this
    /// multiple of the coarse-grid best.
    pub fallback_factor: f64,
    /// Number of grid-local minima (best first) used as polish starts.
    pub starts: usize,
    pub execution: Execution,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            grid_points: 25,
            diameter_tol: 1e-8,
            max_iter: 5000,
            fallback_factor: 1.5,
            starts: 4,
            execution: Execution::default(),
        }
    }
}

/// Joint fit at the optimizing `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullFit {
    pub lambda: [f64; 2],
    pub inner: InnerFit,
    /// `H(lambda)` for the full four-column span.
    pub objective: f64,
    pub iterations: usize,
    pub used_warm_start: bool,
}

/// `H(lambda)`. Columns whose QR pivot vanishes (the degenerate manifold) add
/// no span and are left out of the projection.
pub fn reduced_objective(lambda: [f64; 2], grid: &MaturityGrid, y: &DVector<f64>) -> Result<f64> {
    check_lambda(lambda)?;
    if y.len() != grid.len() {
        return Err(NssError::DimensionMismatch {
            expected: grid.len(),
            got: y.len(),
        });
    }
    Ok(objective_unchecked(lambda, grid.taus(), y))
}

fn objective_unchecked(lambda: [f64; 2], taus: &[f64], y: &DVector<f64>) -> f64 {
    let a = design_values(taus, lambda);
    let fact = match qr_positive(&a) {
        Ok(f) => f,
        Err(_) => return f64::NAN,
    };
    let tol = f64::EPSILON * a.norm() * a.nrows() as f64;
    let mut resid = y.clone();
    for j in 0..4 {
        if fact.r[(j, j)] > tol {
            let col = fact.psi.column(j);
            let g = col.dot(y);
            resid.axpy(-g, &col, 1.0);
        }
    }
    resid.norm_squared()
}

/// Best point of a log-spaced grid scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseScan {
    pub lambda: [f64; 2],
    pub objective: f64,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// `values[i * n2 + j] = H(axis1[i], axis2[j])`.
    pub values: Vec<f64>,
}

impl CoarseScan {
    /// Up to `k` grid points no worse than their 8 neighbours, best first.
    /// The overall best point is always first.
    pub fn local_minima(&self, k: usize) -> Vec<[f64; 2]> {
        let (n1, n2) = (self.axis1.len(), self.axis2.len());
        let at = |i: usize, j: usize| self.values[i * n2 + j];
        let mut found: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..n1 {
            for j in 0..n2 {
                let v = at(i, j);
                if !v.is_finite() {
                    continue;
                }
                let mut is_min = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= n1 as i64 || b >= n2 as i64 {
                            continue;
                        }
                        let w = at(a as usize, b as usize);
                        if w.is_finite() && w < v {
                            is_min = false;
                        }
                    }
                }
                if is_min {
                    found.push((v, i, j));
                }
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut out = vec![self.lambda];
        for (_, i, j) in found {
            let l = [self.axis1[i], self.axis2[j]];
            if out.len() >= k {
                break;
            }
            if l != self.lambda {
                out.push(l);
            }
        }
        out
    }
}

/// Evaluates `H` on the grid; ties go to the smaller `lambda_1`, then `lambda_2`.
pub fn coarse_scan(
    grid: &MaturityGrid,
    y: &DVector<f64>,
    bx: &LambdaBox,
    points: usize,
    exec: Execution,
) -> Result<CoarseScan> {
    if y.len() != grid.len() {
        return Err(NssError::DimensionMismatch {
            expected: grid.len(),
            got: y.len(),
        });
    }
    if points == 0 {
        return Err(NssError::Argument("coarse grid needs at least one point".into()));
    }
    let axis1 = bx.axis(0, points);
    let axis2 = bx.axis(1, points);
    let n2 = axis2.len();
    let taus = grid.taus();
    let values = exec.map_range(axis1.len() * n2, |k| {
        objective_unchecked([axis1[k / n2], axis2[k % n2]], taus, y)
    });
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((k, v)),
        }
    }
    let (k, objective) =
        best.ok_or_else(|| NssError::OptimizationFailed("every coarse-grid point is degenerate".into()))?;
    Ok(CoarseScan {
        lambda: [axis1[k / n2], axis2[k % n2]],
        objective,
        axis1,
        axis2,
        values,
    })
}

/// Outcome of a Nelder-Mead run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexResult {
    pub x: [f64; 2],
    pub value: f64,
    pub iterations: usize,
}

/// Two-dimensional Nelder-Mead with standard coefficients. `project` maps each
/// trial vertex back into the feasible set.
pub fn nelder_mead<F, P>(f: F, project: P, x0: [f64; 2], step: f64, diameter_tol: f64, max_iter: usize) -> SimplexResult
where
    F: Fn([f64; 2]) -> f64,
    P: Fn([f64; 2]) -> [f64; 2],
{
    let eval = |x: [f64; 2]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let x0 = project(x0);
    let mut s: [([f64; 2], f64); 3] = [(x0, eval(x0)); 3];
    for j in 0..2 {
        let mut x = x0;
        x[j] += step;
        let mut xp = project(x);
        if xp == x0 {
            x[j] = x0[j] - step;
            xp = project(x);
        }
        s[j + 1] = (xp, eval(xp));
    }
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let mut iterations = 0;
    while iterations < max_iter {
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(&s) < diameter_tol {
            break;
        }
        iterations += 1;
        let c = [(s[0].0[0] + s[1].0[0]) / 2.0, (s[0].0[1] + s[1].0[1]) / 2.0];
        let worst = s[2];
        let xr = project(lerp(c, worst.0, -1.0));
        let fr = eval(xr);
        if fr < s[0].1 {
            let xe = project(lerp(c, worst.0, -2.0));
            let fe = eval(xe);
            s[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < s[1].1 {
            s[2] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let x = project(lerp(c, xr, 0.5));
            (x, eval(x))
        } else {
            let x = project(lerp(c, worst.0, 0.5));
            (x, eval(x))
        };
        if fc < worst.1.min(fr) {
            s[2] = (xc, fc);
            continue;
        }
        let best = s[0].0;
        for v in s.iter_mut().skip(1) {
            let x = project(lerp(best, v.0, 0.5));
            *v = (x, eval(x));
        }
    }
    s.sort_by(|a, b| a.1.total_cmp(&b.1));
    SimplexResult {
        x: s[0].0,
        value: s[0].1,
        iterations,
    }
}

fn diameter(s: &[([f64; 2], f64); 3]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            let dx = s[i].0[0] - s[j].0[0];
            let dy = s[i].0[1] - s[j].0[1];
            d = d.max((dx * dx + dy * dy).sqrt());
        }
    }
    d
}

fn polish(
    grid: &MaturityGrid,
    y: &DVector<f64>,
    bx: &LambdaBox,
    start: [f64; 2],
    step: f64,
    cfg: &OuterConfig,
) -> SimplexResult {
    let taus = grid.taus();
    let r = nelder_mead(
        |z| objective_unchecked([z[0].exp(), z[1].exp()], taus, y),
        |z| bx.clamp_log(z),
        [start[0].ln(), start[1].ln()],
        step,
        cfg.diameter_tol,
        cfg.max_iter,
    );
    SimplexResult {
        x: [r.x[0].exp(), r.x[1].exp()],
        ..r
    }
}

fn log_spacing(bx: &LambdaBox, points: usize) -> f64 {
    let span = (bx.hi[0] / bx.lo[0]).ln().max((bx.hi[1] / bx.lo[1]).ln());
    span / (points.max(2) - 1) as f64
}

fn finish(
    grid: &MaturityGrid,
    y: &DVector<f64>,
    lambda: [f64; 2],
    objective: f64,
    iterations: usize,
    used_warm_start: bool,
    sel: &Selection,
) -> Result<FullFit> {
    let phi = DesignMatrix {
        values: design_values(grid.taus(), lambda),
        grid: grid.clone(),
        lambda,
    };
    let fact = qr_positive(&phi.values)?;
    let inner = inner_step_with(&phi, &fact, y, sel)?;
    Ok(FullFit {
        lambda,
        inner,
        objective,
        iterations,
        used_warm_start,
    })
}

/// Coarse scan plus Nelder-Mead polish from the best grid point.
pub fn fit_global(
    grid: &MaturityGrid,
    y: &DVector<f64>,
    bx: &LambdaBox,
    sel: &Selection,
    cfg: &OuterConfig,
) -> Result<FullFit> {
    let scan = coarse_scan(grid, y, bx, cfg.grid_points, cfg.execution)?;
    global_from_scan(grid, y, bx, sel, cfg, &scan)
}

fn global_from_scan(
    grid: &MaturityGrid,
    y: &DVector<f64>,
    bx: &LambdaBox,
    sel: &Selection,
    cfg: &OuterConfig,
    scan: &CoarseScan,
) -> Result<FullFit> {
    let step = 0.5 * log_spacing(bx, cfg.grid_points);
    let starts = scan.local_minima(cfg.starts.max(1));
    let runs = cfg.execution.map_slice(&starts, |&s| polish(grid, y, bx, s, step, cfg));
    let mut lambda = scan.lambda;
    let mut objective = scan.objective;
    let mut iterations = 0;
    for r in &runs {
        iterations += r.iterations;
        if r.value < objective {
            lambda = r.x;
            objective = r.value;
        }
    }
    finish(grid, y, lambda, objective, iterations, false, sel)
}

/// Local polish from `prev_lambda`, with a global fallback when the local
/// optimum is worse than `fallback_factor` times the coarse-grid best.
pub fn fit_warm(
    grid: &MaturityGrid,
    y: &DVector<f64>,
    prev_lambda: [f64; 2],
    bx: &LambdaBox,
    sel: &Selection,
    cfg: &OuterConfig,
) -> Result<FullFit> {
    check_lambda(prev_lambda)?;
    if !bx.contains(prev_lambda) {
        return Err(NssError::Domain(format!(
            "warm start {:?} outside the lambda box",
            prev_lambda
        )));
    }
    if y.len() != grid.len() {
        return Err(NssError::DimensionMismatch {
            expected: grid.len(),
            got: y.len(),
        });
    }
    let start_value = objective_unchecked(prev_lambda, grid.taus(), y);
    let step = 0.25 * log_spacing(bx, cfg.grid_points);
    let r = polish(grid, y, bx, prev_lambda, step, cfg);
    // Moves smaller than the rounding floor of H keep the previous lambda.
    let floor = f64::EPSILON * y.norm_squared();
    let (lambda, objective) = if r.value < start_value - floor || !start_value.is_finite() {
        (r.x, r.value)
    } else {
        (prev_lambda, start_value)
    };
    let scan = coarse_scan(grid, y, bx, cfg.grid_points, cfg.execution)?;
    if !objective.is_finite() || objective > cfg.fallback_factor * scan.objective + floor {
        return global_from_scan(grid, y, bx, sel, cfg, &scan);
    }
    finish(grid, y, lambda, objective, r.iterations, true, sel)
}
