//! Profile negative log-likelihoods.
//!
//! Under Gaussian noise with known `sigma`, `Delta NLL = (RSS - RSS_hat) / (2 sigma^2)`.
//! Conditional profiles hold `lambda` fixed and are exact quadratics; full
//! profiles re-optimize `lambda` at every profile point.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NssError, Result};
use crate::nss::{check_lambda, design_values, DesignMatrix, MaturityGrid};
use crate::ortho::{qr_positive, ModelChoice, OrthoFactorization, Selection};
use crate::par::Execution;
use crate::varpro::{fit_global, nelder_mead, CoarseScan, LambdaBox, OuterConfig};

/// A profiled parameter. Indices are 1-based, as in `beta_1..beta_4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "lowercase")]
pub enum ParamId {
    Beta(usize),
    Gamma(usize),
    Lambda(usize),
}

impl ParamId {
    fn validate(self) -> Result<Self> {
        let ok = match self {
            ParamId::Beta(j) | ParamId::Gamma(j) => (1..=4).contains(&j),
            ParamId::Lambda(k) => (1..=2).contains(&k),
        };
        if ok {
            Ok(self)
        } else {
            Err(NssError::Argument(format!("no such parameter: {self}")))
        }
    }
}

impl std::fmt::Display for ParamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamId::Beta(j) => write!(f, "beta{j}"),
            ParamId::Gamma(j) => write!(f, "gamma{j}"),
            ParamId::Lambda(k) => write!(f, "lambda{k}"),
        }
    }
}

impl std::str::FromStr for ParamId {
    type Err = NssError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || NssError::Argument(format!("unknown parameter '{s}'"));
        let (name, idx) = s.split_at(s.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?);
        let idx: usize = idx.parse().map_err(|_| bad())?;
        let id = match name {
            "beta" | "b" => ParamId::Beta(idx),
            "gamma" | "g" => ParamId::Gamma(idx),
            "lambda" | "l" => ParamId::Lambda(idx),
            _ => return Err(bad()),
        };
        id.validate()
    }
}

/// One profile: `dnll[i]` at `values[i]`; `NaN` marks a failed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub parameter: ParamId,
    pub values: Vec<f64>,
    pub dnll: Vec<f64>,
    pub conditional: bool,
    pub mle: f64,
    /// Standard deviation of the exact quadratic (conditional profiles only).
    pub profile_std: Option<f64>,
    /// Optimizing `lambda` at each point (full profiles only).
    pub lambda_path: Option<Vec<[f64; 2]>>,
}

impl ProfileCurve {
    pub fn missing(&self) -> Vec<usize> {
        (0..self.dnll.len()).filter(|&i| self.dnll[i].is_nan()).collect()
    }

    /// Columns `value,dnll`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["value", "dnll"])?;
        for (v, d) in self.values.iter().zip(&self.dnll) {
            out.write_record([v.to_string(), fmt_opt(*d)])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// `n` equally spaced points over `center +- half_width`.
pub fn symmetric_values(center: f64, half_width: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![center];
    }
    (0..n)
        .map(|i| center - half_width + 2.0 * half_width * i as f64 / (n - 1) as f64)
        .collect()
}

/// Least-squares residual of `rhs` against the columns of `a` (all of them).
fn projection_residual(a: &DMatrix<f64>, rhs: &DVector<f64>) -> (f64, DVector<f64>) {
    if a.ncols() == 0 {
        return (rhs.norm_squared(), DVector::zeros(0));
    }
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.tr_mul(rhs);
    let resid = rhs - &q * &qty;
    let coef = r
        .solve_upper_triangular(&qty)
        .unwrap_or_else(|| DVector::from_element(a.ncols(), f64::NAN));
    (resid.norm_squared(), coef)
}

/// Minimum of `||y - B x||^2` with the coordinates in `fixed` pinned; returns
/// the RSS and the full coefficient vector.
pub fn constrained_rss(basis: &DMatrix<f64>, y: &DVector<f64>, fixed: &[(usize, f64)]) -> (f64, DVector<f64>) {
    let n = basis.ncols();
    let free: Vec<usize> = (0..n).filter(|j| !fixed.iter().any(|(k, _)| k == j)).collect();
    let mut rhs = y.clone();
    for &(k, v) in fixed {
        rhs.axpy(-v, &basis.column(k), 1.0);
    }
    let a = basis.select_columns(free.iter());
    let (rss, c) = projection_residual(&a, &rhs);
    let mut full = DVector::zeros(n);
    for &(k, v) in fixed {
        full[k] = v;
    }
    for (i, &j) in free.iter().enumerate() {
        full[j] = c[i];
    }
    (rss, full)
}

/// `phi_j` minus its projection on the other columns, with the VIF split
/// `sigma^2 / ||phi_j||^2 * 1 / (1 - rho_j^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileWidth {
    pub perp_norm: f64,
    pub column_norm: f64,
    /// `rho_j^2`, the squared multiple correlation of column j on the others.
    pub rho_sq: f64,
    pub profile_std: f64,
    pub flat: bool,
}

pub fn profile_width(phi: &DMatrix<f64>, j: usize, sigma: f64) -> ProfileWidth {
    let col = phi.column(j).into_owned();
    let others: Vec<usize> = (0..phi.ncols()).filter(|&k| k != j).collect();
    let (perp_sq, _) = projection_residual(&phi.select_columns(others.iter()), &col);
    let column_norm = col.norm();
    let perp_norm = perp_sq.max(0.0).sqrt();
    let flat = perp_norm <= f64::EPSILON * column_norm * phi.nrows() as f64;
    ProfileWidth {
        perp_norm,
        column_norm,
        rho_sq: 1.0 - perp_sq / (column_norm * column_norm),
        profile_std: if flat { f64::INFINITY } else { sigma / perp_norm },
        flat,
    }
}

/// Conditional profile of `beta_j` at fixed `lambda`: the exact quadratic
/// `(b - beta_hat_j)^2 ||phi_j^perp||^2 / (2 sigma^2)`. A column inside the
/// span of the others gives a flat curve with infinite `profile_std`.
pub fn conditional_profile_beta(
    j: usize,
    phi: &DesignMatrix,
    y: &DVector<f64>,
    sigma: f64,
    values: &[f64],
) -> Result<ProfileCurve> {
    ParamId::Beta(j).validate()?;
    check_dims(phi.nrows(), y.len())?;
    let w = profile_width(&phi.values, j - 1, sigma);
    let (_, beta_hat) = constrained_rss(&phi.values, y, &[]);
    let mle = beta_hat[j - 1];
    let dnll = if w.flat {
        vec![0.0; values.len()]
    } else {
        values
            .iter()
            .map(|b| (b - mle).powi(2) * w.perp_norm.powi(2) / (2.0 * sigma * sigma))
            .collect()
    };
    Ok(ProfileCurve {
        parameter: ParamId::Beta(j),
        values: values.to_vec(),
        dnll,
        conditional: true,
        mle,
        profile_std: Some(w.profile_std),
        lambda_path: None,
    })
}

/// Conditional `beta_j` profile by re-solving the constrained least squares at
/// each value.
pub fn conditional_profile_beta_numeric(
    j: usize,
    phi: &DesignMatrix,
    y: &DVector<f64>,
    sigma: f64,
    values: &[f64],
    exec: Execution,
) -> Result<ProfileCurve> {
    ParamId::Beta(j).validate()?;
    check_dims(phi.nrows(), y.len())?;
    let (rss_hat, beta_hat) = constrained_rss(&phi.values, y, &[]);
    let dnll = exec.map_slice(values, |&b| {
        let (rss, _) = constrained_rss(&phi.values, y, &[(j - 1, b)]);
        (rss - rss_hat) / (2.0 * sigma * sigma)
    });
    Ok(ProfileCurve {
        parameter: ParamId::Beta(j),
        values: values.to_vec(),
        dnll,
        conditional: true,
        mle: beta_hat[j - 1],
        profile_std: None,
        lambda_path: None,
    })
}

/// Conditional profile of `gamma_j`: `(g - gamma_hat_j)^2 / (2 sigma^2)`.
pub fn conditional_profile_gamma(
    j: usize,
    fact: &OrthoFactorization,
    y: &DVector<f64>,
    sigma: f64,
    values: &[f64],
) -> Result<ProfileCurve> {
    ParamId::Gamma(j).validate()?;
    check_dims(fact.nrows(), y.len())?;
    let mle = fact.psi.column(j - 1).dot(y);
    let dnll = values
        .iter()
        .map(|g| (g - mle).powi(2) / (2.0 * sigma * sigma))
        .collect();
    Ok(ProfileCurve {
        parameter: ParamId::Gamma(j),
        values: values.to_vec(),
        dnll,
        conditional: true,
        mle,
        profile_std: Some(sigma),
        lambda_path: None,
    })
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(NssError::DimensionMismatch { expected, got })
    }
}

/// Full-profile settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub outer: OuterConfig,
    /// Start each point from its neighbour's optimum as well as from the MLE;
    /// otherwise points are independent and may run in parallel.
    pub warm_chain: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            outer: OuterConfig::default(),
            warm_chain: true,
        }
    }
}

/// RSS minimised over the linear block with `target = value` pinned, at fixed
/// `lambda`. For `Lambda(k)` targets the pinned coordinate is set in `lambda`.
fn pinned_rss(target: ParamId, value: f64, lambda: [f64; 2], taus: &[f64], y: &DVector<f64>) -> f64 {
    let mut lambda = lambda;
    if let ParamId::Lambda(k) = target {
        lambda[k - 1] = value;
    }
    if check_lambda(lambda).is_err() {
        return f64::NAN;
    }
    let phi = design_values(taus, lambda);
    match target {
        ParamId::Beta(j) => constrained_rss(&phi, y, &[(j - 1, value)]).0,
        ParamId::Gamma(j) => match qr_positive(&phi) {
            Ok(f) => {
                let g = f.psi.tr_mul(y);
                let proj = &f.psi * &g;
                (y - proj).norm_squared() + (g[j - 1] - value).powi(2)
            }
            Err(_) => f64::NAN,
        },
        ParamId::Lambda(_) => constrained_rss(&phi, y, &[]).0,
    }
}

/// Minimises `pinned_rss` over the free decay parameters. Linear targets are
/// polished from every start in `starts` and from the best grid-local minima
/// of a coarse scan of the pinned objective; the best result wins.
fn optimize_point(
    target: ParamId,
    value: f64,
    starts: &[[f64; 2]],
    taus: &[f64],
    y: &DVector<f64>,
    bx: &LambdaBox,
    cfg: &OuterConfig,
) -> ([f64; 2], f64) {
    let f = |l: [f64; 2]| pinned_rss(target, value, l, taus, y);
    let start = starts[0];
    if let ParamId::Lambda(k) = target {
        let free = 2 - k;
        let (lo, hi) = (bx.lo[free].ln(), bx.hi[free].ln());
        let g = |z: f64| {
            let mut l = start;
            l[free] = z.exp();
            f(l)
        };
        let z = minimize_1d(&g, lo, hi, start[free].ln().clamp(lo, hi), cfg.grid_points);
        let mut l = start;
        l[free] = z.exp();
        l[k - 1] = value;
        return (l, f(l));
    }
    let n = cfg.grid_points.max(2);
    let axis1 = bx.axis(0, n);
    let axis2 = bx.axis(1, n);
    let values: Vec<f64> = (0..n * n).map(|k| f([axis1[k / n], axis2[k % n]])).collect();
    let mut best_k = None;
    for (k, v) in values.iter().enumerate() {
        if v.is_finite() && best_k.is_none_or(|b: usize| *v < values[b]) {
            best_k = Some(k);
        }
    }
    let mut candidates: Vec<[f64; 2]> = starts.to_vec();
    if let Some(b) = best_k {
        let scan = CoarseScan {
            lambda: [axis1[b / n], axis2[b % n]],
            objective: values[b],
            axis1,
            axis2,
            values,
        };
        candidates.extend(scan.local_minima(cfg.starts.max(1)));
    }
    let span = (bx.hi[0] / bx.lo[0]).ln() / (n - 1) as f64;
    let mut best = ([f64::NAN; 2], f64::INFINITY);
    for c in candidates {
        let r = nelder_mead(
            |z| f([z[0].exp(), z[1].exp()]),
            |z| bx.clamp_log(z),
            [c[0].ln(), c[1].ln()],
            0.25 * span,
            cfg.diameter_tol,
            cfg.max_iter,
        );
        if r.value < best.1 {
            best = ([r.x[0].exp(), r.x[1].exp()], r.value);
        }
    }
    best
}

/// Grid scan plus golden-section refinement on `[lo, hi]`; the incumbent `x0`
/// competes with the grid.
fn minimize_1d<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, x0: f64, points: usize) -> f64 {
    let n = points.max(3);
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| nan_inf(f(x))).collect();
    let mut best = (0..n).fold(0, |b, i| if fs[i] < fs[b] { i } else { b });
    let f0 = nan_inf(f(x0));
    let (mut a, mut b) = if f0 < fs[best] {
        let h = (hi - lo) / (n - 1) as f64;
        ((x0 - h).max(lo), (x0 + h).min(hi))
    } else {
        best = best.clamp(1, n - 2);
        (xs[best - 1], xs[best + 1])
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (nan_inf(f(c)), nan_inf(f(d)));
    while (b - a).abs() > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = nan_inf(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = nan_inf(f(d));
        }
    }
    let x = 0.5 * (a + b);
    if nan_inf(f(x)) <= f0 {
        x
    } else {
        x0
    }
}

fn nan_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Maximum-likelihood NSS fit used as the reference of a full profile.
fn reference_fit(
    grid: &MaturityGrid,
    y: &DVector<f64>,
    sigma: f64,
    bx: &LambdaBox,
    cfg: &OuterConfig,
) -> Result<([f64; 2], f64)> {
    let sel = Selection::new(sigma, None)?.with_model(ModelChoice::Nss);
    let fit = fit_global(grid, y, bx, &sel, cfg)?;
    Ok((fit.lambda, fit.objective))
}

fn mle_value(target: ParamId, lambda: [f64; 2], taus: &[f64], y: &DVector<f64>) -> f64 {
    let phi = design_values(taus, lambda);
    match target {
        ParamId::Beta(j) => constrained_rss(&phi, y, &[]).1[j - 1],
        ParamId::Gamma(j) => qr_positive(&phi)
            .map(|f| f.psi.column(j - 1).dot(y))
            .unwrap_or(f64::NAN),
        ParamId::Lambda(k) => lambda[k - 1],
    }
}

/// Full profile: at each value, all other parameters (linear and decay) are
/// re-optimized. `RSS_hat` is the global NSS optimum, lowered to any better
/// point met along the profile.
pub fn full_profile(
    target: ParamId,
    grid: &MaturityGrid,
    y: &DVector<f64>,
    sigma: f64,
    values: &[f64],
    bx: &LambdaBox,
    cfg: &ProfileConfig,
) -> Result<ProfileCurve> {
    target.validate()?;
    check_dims(grid.len(), y.len())?;
    if !(sigma > 0.0) {
        return Err(NssError::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    let taus = grid.taus();
    let (lam_hat, rss_hat) = reference_fit(grid, y, sigma, bx, &cfg.outer)?;
    let mle = mle_value(target, lam_hat, taus, y);
    let n = values.len();
    let mut path = vec![[f64::NAN; 2]; n];
    let mut rss = vec![f64::NAN; n];

    let solve = |i: usize, start: [f64; 2]| -> ([f64; 2], f64) {
        let starts = if start == lam_hat {
            vec![start]
        } else {
            vec![start, lam_hat]
        };
        optimize_point(target, values[i], &starts, taus, y, bx, &cfg.outer)
    };

    if cfg.warm_chain && n > 0 {
        let i0 = (0..n)
            .min_by(|&a, &b| (values[a] - mle).abs().total_cmp(&(values[b] - mle).abs()))
            .unwrap_or(0);
        let mut start = lam_hat;
        for i in i0..n {
            let (l, r) = solve(i, start);
            path[i] = l;
            rss[i] = r;
            if r.is_finite() {
                start = l;
            }
        }
        start = if i0 < n && rss[i0].is_finite() {
            path[i0]
        } else {
            lam_hat
        };
        for i in (0..i0).rev() {
            let (l, r) = solve(i, start);
            path[i] = l;
            rss[i] = r;
            if r.is_finite() {
                start = l;
            }
        }
    } else {
        let res = cfg.outer.execution.map_range(n, |i| solve(i, lam_hat));
        for (i, (l, r)) in res.into_iter().enumerate() {
            path[i] = l;
            rss[i] = r;
        }
    }
    let floor = rss.iter().copied().filter(|r| r.is_finite()).fold(rss_hat, f64::min);
    let dnll = rss
        .iter()
        .map(|&r| {
            if r.is_finite() {
                (r - floor) / (2.0 * sigma * sigma)
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(ProfileCurve {
        parameter: target,
        values: values.to_vec(),
        dnll,
        conditional: false,
        mle,
        profile_std: None,
        lambda_path: Some(path),
    })
}

/// `chi^2` quantiles for 1 and 2 degrees of freedom.
pub fn chi2_quantile(dof: usize, level: f64) -> Result<f64> {
    let table: &[(f64, f64)] = match dof {
        1 => &[
            (0.90, 2.705_543_454_095_404),
            (0.95, 3.841_458_820_694_124),
            (0.99, 6.634_896_601_021_214),
        ],
        2 => &[
            (0.90, 4.605_170_185_988_091),
            (0.95, 5.991_464_547_107_979),
            (0.99, 9.210_340_371_976_182),
        ],
        _ => {
            return Err(NssError::Argument(format!(
                "chi-square quantiles only for 1 or 2 dof, got {dof}"
            )))
        }
    };
    table
        .iter()
        .find(|(l, _)| (l - level).abs() < 1e-12)
        .map(|&(_, q)| q)
        .ok_or_else(|| NssError::Argument(format!("unsupported confidence level {level}")))
}

/// Set `{Delta NLL <= chi^2_{1,level} / 2}` as disjoint intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub level: f64,
    pub threshold: f64,
    pub intervals: Vec<(f64, f64)>,
    /// The profile stays below the threshold at an end of its grid.
    pub unbounded_below: bool,
    pub unbounded_above: bool,
}

impl ConfidenceSet {
    pub fn is_bounded(&self) -> bool {
        !(self.unbounded_below || self.unbounded_above)
    }

    /// Total length of the set.
    pub fn width(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }
}

/// Exact endpoints `mle +- sqrt(2 t) std` for conditional curves, linear
/// interpolation of the crossings otherwise.
pub fn confidence_interval(curve: &ProfileCurve, level: f64) -> Result<ConfidenceSet> {
    let threshold = 0.5 * chi2_quantile(1, level)?;
    if let Some(sd) = curve.profile_std {
        if sd.is_finite() {
            let h = (2.0 * threshold).sqrt() * sd;
            return Ok(ConfidenceSet {
                level,
                threshold,
                intervals: vec![(curve.mle - h, curve.mle + h)],
                unbounded_below: false,
                unbounded_above: false,
            });
        }
        return Ok(ConfidenceSet {
            level,
            threshold,
            intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)],
            unbounded_below: true,
            unbounded_above: true,
        });
    }
    let mut pts: Vec<(f64, f64)> = curve
        .values
        .iter()
        .zip(&curve.dnll)
        .filter(|(_, d)| !d.is_nan())
        .map(|(&v, &d)| (v, d))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.is_empty() {
        return Err(NssError::Argument("profile has no valid points".into()));
    }
    let cross = |a: (f64, f64), b: (f64, f64)| a.0 + (threshold - a.1) * (b.0 - a.0) / (b.1 - a.1);
    let mut intervals = Vec::new();
    let mut open: Option<f64> = if pts[0].1 <= threshold { Some(pts[0].0) } else { None };
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        match (a.1 <= threshold, b.1 <= threshold) {
            (false, true) => open = Some(cross(a, b)),
            (true, false) => {
                intervals.push((open.take().unwrap_or(a.0), cross(a, b)));
            }
            _ => {}
        }
    }
    let last = pts[pts.len() - 1];
    if let Some(s) = open {
        intervals.push((s, last.0));
    }
    Ok(ConfidenceSet {
        level,
        threshold,
        unbounded_below: pts[0].1 <= threshold,
        unbounded_above: last.1 <= threshold,
        intervals,
    })
}

/// Which linear pair spans a landscape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Beta,
    Gamma,
}

/// Conditional `Delta NLL` over a rectangle in two linear coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape2D {
    pub basis: Basis,
    /// 1-based coordinates of the two axes.
    pub pair: (usize, usize),
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `dnll[i * ys.len() + j]` at `(xs[i], ys[j])`.
    pub dnll: Vec<f64>,
    /// First coordinate fixed, second optimized: `(x, y*(x))`.
    pub path_first: Vec<(f64, f64)>,
    /// Second coordinate fixed, first optimized: `(x*(y), y)`.
    pub path_second: Vec<(f64, f64)>,
    pub mle: (f64, f64),
}

impl Landscape2D {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.dnll[i * self.ys.len() + j]
    }

    /// Columns `x,y,dnll`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "y", "dnll"])?;
        for (i, x) in self.xs.iter().enumerate() {
            for (j, y) in self.ys.iter().enumerate() {
                out.write_record([x.to_string(), y.to_string(), fmt_opt(self.at(i, j))])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Columns `path,x,y`.
    pub fn write_paths_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["path", "x", "y"])?;
        for (name, path) in [("first", &self.path_first), ("second", &self.path_second)] {
            for (x, y) in path.iter() {
                out.write_record([name.to_string(), x.to_string(), y.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// `Delta NLL` with the two remaining linear coordinates profiled out, at the
/// fixed `lambda` of `phi`.
pub fn landscape_2d(
    basis: Basis,
    pair: (usize, usize),
    phi: &DesignMatrix,
    y: &DVector<f64>,
    sigma: f64,
    xs: &[f64],
    ys: &[f64],
    exec: Execution,
) -> Result<Landscape2D> {
    let (a, b) = pair;
    if !(1..=4).contains(&a) || !(1..=4).contains(&b) || a == b {
        return Err(NssError::Argument(format!("invalid coordinate pair ({a}, {b})")));
    }
    check_dims(phi.nrows(), y.len())?;
    let mat = match basis {
        Basis::Beta => phi.values.clone(),
        Basis::Gamma => qr_positive(&phi.values)?.psi,
    };
    let (rss_hat, coef) = constrained_rss(&mat, y, &[]);
    let s2 = 2.0 * sigma * sigma;
    let ny = ys.len();
    let dnll = exec.map_range(xs.len() * ny, |k| {
        let (rss, _) = constrained_rss(&mat, y, &[(a - 1, xs[k / ny]), (b - 1, ys[k % ny])]);
        (rss - rss_hat) / s2
    });
    let path_first = xs
        .iter()
        .map(|&x| (x, constrained_rss(&mat, y, &[(a - 1, x)]).1[b - 1]))
        .collect();
    let path_second = ys
        .iter()
        .map(|&v| (constrained_rss(&mat, y, &[(b - 1, v)]).1[a - 1], v))
        .collect();
    Ok(Landscape2D {
        basis,
        pair,
        xs: xs.to_vec(),
        ys: ys.to_vec(),
        dnll,
        path_first,
        path_second,
        mle: (coef[a - 1], coef[b - 1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nss::{curve_eval, design_matrix, NssParams};
    use crate::ortho::thin_qr_positive;

    fn setup(l: [f64; 2]) -> (DesignMatrix, DVector<f64>) {
        let g = MaturityGrid::us_treasury_12();
        let p = NssParams::new([0.04, -0.02, 0.015, 0.008], l).unwrap();
        let mut y = curve_eval(&p, &g).unwrap();
        for (i, v) in y.iter_mut().enumerate() {
            *v += 3e-5 * ((i * 7 % 5) as f64 - 2.0);
        }
        (design_matrix(&g, l).unwrap(), y)
    }

    #[test]
    fn parse_param_ids() {
        assert_eq!("beta4".parse::<ParamId>().unwrap(), ParamId::Beta(4));
        assert_eq!("lambda1".parse::<ParamId>().unwrap(), ParamId::Lambda(1));
        assert!("gamma5".parse::<ParamId>().is_err());
        assert!("delta1".parse::<ParamId>().is_err());
        assert_eq!(ParamId::Gamma(2).to_string(), "gamma2");
    }

    #[test]
    fn gamma_profile_is_unit_parabola() {
        let (phi, y) = setup([0.6, 0.2]);
        let f = thin_qr_positive(&phi).unwrap();
        let g = f.psi.column(2).dot(&y);
        let c = conditional_profile_gamma(3, &f, &y, 5e-5, &[g, g + 5e-5]).unwrap();
        assert_eq!(c.dnll[0], 0.0);
        assert!((c.dnll[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn numeric_beta_profile_matches_closed_form() {
        let (phi, y) = setup([0.6, 0.3]);
        for j in 1..=4 {
            let c = conditional_profile_beta(j, &phi, &y, 5e-5, &[0.0]).unwrap();
            let vals = symmetric_values(c.mle, 5.0 * c.profile_std.unwrap(), 11);
            let a = conditional_profile_beta(j, &phi, &y, 5e-5, &vals).unwrap();
            let b = conditional_profile_beta_numeric(j, &phi, &y, 5e-5, &vals, Execution::Sequential).unwrap();
            for (x, z) in a.dnll.iter().zip(&b.dnll) {
                assert!((x - z).abs() < 1e-8, "{x} vs {z}");
            }
        }
    }

    #[test]
    fn gaussian_interval() {
        let (phi, y) = setup([0.6, 0.2]);
        let f = thin_qr_positive(&phi).unwrap();
        let c = conditional_profile_gamma(1, &f, &y, 5e-5, &[0.0]).unwrap();
        let ci = confidence_interval(&c, 0.95).unwrap();
        let (lo, hi) = ci.intervals[0];
        assert!(((hi - lo) / 2.0 / 5e-5 - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn interpolated_interval_and_unbounded_flag() {
        let values: Vec<f64> = (0..201).map(|i| -5.0 + 0.05 * i as f64).collect();
        let mut c = ProfileCurve {
            parameter: ParamId::Beta(1),
            dnll: values.iter().map(|v| 0.5 * v * v).collect(),
            values: values.clone(),
            conditional: false,
            mle: 0.0,
            profile_std: None,
            lambda_path: None,
        };
        let ci = confidence_interval(&c, 0.95).unwrap();
        assert!(ci.is_bounded());
        assert!((ci.intervals[0].1 - 1.96).abs() < 1e-2);
        c.dnll = vec![0.01; values.len()];
        let flat = confidence_interval(&c, 0.95).unwrap();
        assert!(flat.unbounded_below && flat.unbounded_above);
    }

    #[test]
    fn quantiles() {
        assert!((0.5 * chi2_quantile(1, 0.95).unwrap() - 1.9207).abs() < 1e-4);
        assert!((0.5 * chi2_quantile(2, 0.95).unwrap() - 2.9957).abs() < 1e-4);
        assert!(chi2_quantile(3, 0.95).is_err());
    }

    #[test]
    fn gamma_landscape_is_circular() {
        let (phi, y) = setup([0.6, 0.4]);
        let f = thin_qr_positive(&phi).unwrap();
        let g3 = f.psi.column(2).dot(&y);
        let g4 = f.psi.column(3).dot(&y);
        let xs = symmetric_values(g3, 2e-4, 9);
        let ys = symmetric_values(g4, 2e-4, 9);
        let l = landscape_2d(Basis::Gamma, (3, 4), &phi, &y, 5e-5, &xs, &ys, Execution::Sequential).unwrap();
        for (i, x) in xs.iter().enumerate() {
            for (j, v) in ys.iter().enumerate() {
                let e = ((x - g3).powi(2) + (v - g4).powi(2)) / (2.0 * 2.5e-9);
                assert!((l.at(i, j) - e).abs() < 1e-8 * e.max(1.0));
            }
        }
        assert!(l.at(4, 4).abs() < 1e-9);
    }
}
