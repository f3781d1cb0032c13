//! Thin QR with a positive-diagonal convention and the orthogonal inner fit.
//!
//! For `Phi = Psi R` the orthogonal coordinates are `gamma = R beta`, estimated
//! by the projection `gamma = Psi^T y`. The last diagonal entry `R_44` is the
//! distance of the Svensson column from the Nelson-Siegel span and drives the
//! NS/NSS model choice.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{NssError, Result};
use crate::nss::{design_matrix, DesignMatrix, MaturityGrid};

/// `Phi = Psi R`, `Psi` with orthonormal columns, `R` upper triangular with
/// non-negative diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoFactorization {
    pub psi: DMatrix<f64>,
    pub r: Matrix4<f64>,
    /// Some diagonal entry of `R` is zero to working precision.
    pub degenerate: bool,
}

impl OrthoFactorization {
    pub fn r44(&self) -> f64 {
        self.r[(3, 3)]
    }

    pub fn nrows(&self) -> usize {
        self.psi.nrows()
    }
}

/// Unpivoted Householder QR of an `m x 4` matrix, signs fixed so `R_jj >= 0`.
pub fn qr_positive(a: &DMatrix<f64>) -> Result<OrthoFactorization> {
    if a.ncols() != 4 {
        return Err(NssError::DimensionMismatch {
            expected: 4,
            got: a.ncols(),
        });
    }
    if a.nrows() < 4 {
        return Err(NssError::Argument(format!(
            "thin QR needs at least 4 rows, got {}",
            a.nrows()
        )));
    }
    let qr = a.clone().qr();
    let mut psi = qr.q();
    let rd = qr.r();
    let mut r = Matrix4::zeros();
    for i in 0..4 {
        for j in i..4 {
            r[(i, j)] = rd[(i, j)];
        }
    }
    for j in 0..4 {
        if r[(j, j)] < 0.0 {
            psi.column_mut(j).neg_mut();
            for k in j..4 {
                r[(j, k)] = -r[(j, k)];
            }
        }
    }
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let tol = f64::EPSILON * scale * (a.nrows() as f64);
    let degenerate = (0..4).any(|j| r[(j, j)] <= tol);
    Ok(OrthoFactorization { psi, r, degenerate })
}

pub fn thin_qr_positive(phi: &DesignMatrix) -> Result<OrthoFactorization> {
    qr_positive(&phi.values)
}

/// QR of `diag(sqrt(w)) Phi` for weighted least squares.
pub fn weighted_qr(phi: &DesignMatrix, w: &[f64]) -> Result<OrthoFactorization> {
    check_len(phi.nrows(), w.len())?;
    if let Some(bad) = w.iter().find(|&&wi| !(wi > 0.0 && wi.is_finite())) {
        return Err(NssError::Domain(format!("weights must be > 0, got {bad}")));
    }
    let mut a = phi.values.clone();
    for (i, wi) in w.iter().enumerate() {
        a.row_mut(i).scale_mut(wi.sqrt());
    }
    qr_positive(&a)
}

/// Weighted orthogonal fit: returns `gamma_W = Psi_W^T W^{1/2} y` and the fitted
/// curve in the original yield scale.
pub fn weighted_fit(fact: &OrthoFactorization, w: &[f64], y: &DVector<f64>) -> Result<(Vector4<f64>, DVector<f64>)> {
    check_len(fact.nrows(), y.len())?;
    check_len(fact.nrows(), w.len())?;
    let yw = DVector::from_iterator(y.len(), y.iter().zip(w).map(|(v, wi)| v * wi.sqrt()));
    let gamma = orthogonal_fit(fact, &yw)?;
    let mut fitted = &fact.psi * gamma;
    for (i, wi) in w.iter().enumerate() {
        fitted[i] /= wi.sqrt();
    }
    Ok((gamma, fitted))
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(NssError::DimensionMismatch { expected, got })
    }
}

/// `gamma_j = psi_j^T y`.
pub fn orthogonal_fit(fact: &OrthoFactorization, y: &DVector<f64>) -> Result<Vector4<f64>> {
    check_len(fact.nrows(), y.len())?;
    let g = fact.psi.tr_mul(y);
    Ok(Vector4::new(g[0], g[1], g[2], g[3]))
}

/// Recovers `beta` from `gamma` by back substitution on `R` (p = 4) or on its
/// leading 3x3 block with `beta_4 = 0` (p = 3).
pub fn recover_beta(fact: &OrthoFactorization, gamma: &Vector4<f64>, p: usize) -> Result<Vector4<f64>> {
    let r = &fact.r;
    match p {
        4 => back_substitute4(r, gamma),
        3 => {
            let r3: Matrix3<f64> = r.fixed_view::<3, 3>(0, 0).into_owned();
            let g3 = Vector3::new(gamma[0], gamma[1], gamma[2]);
            let b = back_substitute3(&r3, &g3)?;
            Ok(Vector4::new(b[0], b[1], b[2], 0.0))
        }
        _ => Err(NssError::Argument(format!("model order must be 3 or 4, got {p}"))),
    }
}

fn singular_tol(r: &Matrix4<f64>) -> f64 {
    f64::EPSILON * r.abs().max()
}

fn back_substitute4(r: &Matrix4<f64>, b: &Vector4<f64>) -> Result<Vector4<f64>> {
    let tol = singular_tol(r);
    let mut x = Vector4::zeros();
    for i in (0..4).rev() {
        let d = r[(i, i)];
        if d.abs() <= tol {
            return Err(NssError::SingularRecovery { index: i + 1, value: d });
        }
        let s: f64 = (i + 1..4).map(|k| r[(i, k)] * x[k]).sum();
        x[i] = (b[i] - s) / d;
    }
    Ok(x)
}

fn back_substitute3(r: &Matrix3<f64>, b: &Vector3<f64>) -> Result<Vector3<f64>> {
    let tol = f64::EPSILON * r.abs().max();
    let mut x = Vector3::zeros();
    for i in (0..3).rev() {
        let d = r[(i, i)];
        if d.abs() <= tol {
            return Err(NssError::SingularRecovery { index: i + 1, value: d });
        }
        let s: f64 = (i + 1..3).map(|k| r[(i, k)] * x[k]).sum();
        x[i] = (b[i] - s) / d;
    }
    Ok(x)
}

/// Inverse of an upper triangular `R` (errors on a zero pivot).
pub fn r_inverse(r: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let mut inv = Matrix4::zeros();
    for c in 0..4 {
        let e = Vector4::from_fn(|i, _| if i == c { 1.0 } else { 0.0 });
        inv.set_column(c, &back_substitute4(r, &e)?);
    }
    Ok(inv)
}

/// Ratio of extreme singular values (`+inf` on exact rank deficiency).
pub fn condition_number_of(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn condition_number(phi: &DesignMatrix) -> f64 {
    condition_number_of(&phi.values)
}

/// Which model the inner step may select.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    /// Nelson-Siegel when `|R_44| < sigma / delta`, otherwise Svensson.
    #[default]
    Auto,
    /// Always three columns.
    Ns,
    /// Always four columns.
    Nss,
}

/// Noise level, tolerated parameter std and model policy for the inner step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub sigma: f64,
    pub delta: f64,
    pub model: ModelChoice,
}

impl Selection {
    /// `delta` defaults to `10 sigma`.
    pub fn new(sigma: f64, delta: Option<f64>) -> Result<Self> {
        let delta = delta.unwrap_or(10.0 * sigma);
        if !(sigma > 0.0) || !(delta > 0.0) {
            return Err(NssError::Domain(format!(
                "sigma and delta must be > 0 (sigma = {sigma}, delta = {delta})"
            )));
        }
        Ok(Self {
            sigma,
            delta,
            model: ModelChoice::Auto,
        })
    }

    pub fn with_model(mut self, model: ModelChoice) -> Self {
        self.model = model;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.sigma / self.delta
    }

    pub fn order_for(&self, r44: f64) -> usize {
        match self.model {
            ModelChoice::Ns => 3,
            ModelChoice::Nss => 4,
            ModelChoice::Auto => {
                if r44.abs() < self.threshold() {
                    3
                } else {
                    4
                }
            }
        }
    }
}

/// Result of the orthogonal inner solve at fixed decay parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerFit {
    pub lambda: [f64; 2],
    pub gamma: [f64; 4],
    pub p: usize,
    pub beta: [f64; 4],
    pub r44: f64,
    pub kappa: f64,
    pub fitted: Vec<f64>,
    /// `||y - fitted||` for the selected model order.
    pub residual_norm: f64,
}

/// QR, projection, `R_44` model choice, fitted curve and `beta` recovery.
pub fn inner_step(grid: &MaturityGrid, y: &DVector<f64>, lambda: [f64; 2], sel: &Selection) -> Result<InnerFit> {
    let phi = design_matrix(grid, lambda)?;
    check_len(phi.nrows(), y.len())?;
    let fact = thin_qr_positive(&phi)?;
    inner_step_with(&phi, &fact, y, sel)
}

pub(crate) fn inner_step_with(
    phi: &DesignMatrix,
    fact: &OrthoFactorization,
    y: &DVector<f64>,
    sel: &Selection,
) -> Result<InnerFit> {
    let gamma = orthogonal_fit(fact, y)?;
    let r44 = fact.r44();
    let p = sel.order_for(r44);
    let fitted = fact.psi.columns(0, p) * gamma.rows(0, p);
    let residual_norm = (y - &fitted).norm();
    let beta = recover_beta(fact, &gamma, p)?;
    Ok(InnerFit {
        lambda: phi.lambda,
        gamma: gamma.into(),
        p,
        beta: beta.into(),
        r44,
        kappa: condition_number(phi),
        fitted: fitted.iter().copied().collect(),
        residual_norm,
    })
}
