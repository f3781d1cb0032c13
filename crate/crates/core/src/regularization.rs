//! Ridge regression in the classical and orthogonal coordinates.
//!
//! Standard ridge solves `(Phi^T Phi + alpha I) beta = Phi^T y`, i.e. filters the
//! SVD components by `s_i^2 / (s_i^2 + alpha)`. Orthogonal ridge penalizes
//! `||gamma||^2 = ||R beta||^2` and shrinks every component by `1 / (1 + alpha)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{NssError, Result};
use crate::nss::{design_matrix, MaturityGrid, NssParams};
use crate::ortho::{recover_beta, thin_qr_positive, OrthoFactorization};
use crate::par::Execution;
use crate::rng::{gaussian_vector, trial_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RidgeBasis {
    Standard,
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeResult {
    pub alpha: f64,
    /// `beta` for standard ridge, `gamma` for orthogonal ridge.
    pub coefficients: [f64; 4],
    pub basis: RidgeBasis,
    pub filter_factors: Option<[f64; 4]>,
    pub gcv_score: Option<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(NssError::Domain(format!("ridge parameter must be >= 0, got {alpha}")))
    }
}

fn check_rows(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if a.ncols() != 4 {
        return Err(NssError::DimensionMismatch {
            expected: 4,
            got: a.ncols(),
        });
    }
    if a.nrows() != y.len() {
        return Err(NssError::DimensionMismatch {
            expected: a.nrows(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Thin SVD pieces reused across `alpha` values.
#[derive(Debug, Clone)]
pub struct RidgeSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
    /// `U^T y`.
    pub uty: DVector<f64>,
    pub y_norm_sq: f64,
}

impl RidgeSvd {
    pub fn new(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        check_rows(phi, y)?;
        let svd = phi.clone().svd(true, true);
        let u = svd.u.expect("left singular vectors requested");
        let v = svd.v_t.expect("right singular vectors requested").transpose();
        let uty = u.tr_mul(y);
        Ok(Self {
            u,
            s: svd.singular_values,
            v,
            uty,
            y_norm_sq: y.norm_squared(),
        })
    }

    pub fn filter_factors(&self, alpha: f64) -> [f64; 4] {
        std::array::from_fn(|i| {
            let s2 = self.s[i] * self.s[i];
            if s2 == 0.0 && alpha == 0.0 {
                0.0
            } else {
                s2 / (s2 + alpha)
            }
        })
    }

    /// `sum f_i (u_i^T y / s_i) v_i`.
    pub fn solve(&self, alpha: f64) -> Vector4<f64> {
        let f = self.filter_factors(alpha);
        let mut beta = Vector4::zeros();
        for i in 0..4 {
            if self.s[i] > 0.0 {
                let c = f[i] * self.uty[i] / self.s[i];
                for r in 0..4 {
                    beta[r] += c * self.v[(r, i)];
                }
            }
        }
        beta
    }

    /// `m ||(I - A) y||^2 / tr(I - A)^2`.
    pub fn gcv(&self, alpha: f64) -> f64 {
        let m = self.u.nrows() as f64;
        let f = self.filter_factors(alpha);
        let outside = (self.y_norm_sq - self.uty.norm_squared()).max(0.0);
        let inside: f64 = (0..4).map(|i| ((1.0 - f[i]) * self.uty[i]).powi(2)).sum();
        let trace = m - f.iter().sum::<f64>();
        m * (outside + inside) / (trace * trace)
    }
}

/// Standard ridge through the SVD filter factors.
pub fn ridge_standard(phi: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> Result<RidgeResult> {
    check_alpha(alpha)?;
    let svd = RidgeSvd::new(phi, y)?;
    Ok(RidgeResult {
        alpha,
        coefficients: svd.solve(alpha).into(),
        basis: RidgeBasis::Standard,
        filter_factors: Some(svd.filter_factors(alpha)),
        gcv_score: Some(svd.gcv(alpha)),
    })
}

/// Standard ridge through the regularized normal equations.
pub fn ridge_standard_direct(phi: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> Result<Vector4<f64>> {
    check_alpha(alpha)?;
    check_rows(phi, y)?;
    let ata = phi.tr_mul(phi);
    let a = Matrix4::from_fn(|i, j| ata[(i, j)] + if i == j { alpha } else { 0.0 });
    let aty = phi.tr_mul(y);
    let rhs = Vector4::new(aty[0], aty[1], aty[2], aty[3]);
    a.cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| a.lu().solve(&rhs))
        .ok_or_else(|| NssError::Degenerate("regularized normal equations are singular".into()))
}

/// `gamma_alpha = Psi^T y / (1 + alpha)`.
pub fn ridge_orthogonal(fact: &OrthoFactorization, y: &DVector<f64>, alpha: f64) -> Result<RidgeResult> {
    check_alpha(alpha)?;
    if fact.nrows() != y.len() {
        return Err(NssError::DimensionMismatch {
            expected: fact.nrows(),
            got: y.len(),
        });
    }
    let g = fact.psi.tr_mul(y) / (1.0 + alpha);
    Ok(RidgeResult {
        alpha,
        coefficients: [g[0], g[1], g[2], g[3]],
        basis: RidgeBasis::Orthogonal,
        filter_factors: None,
        gcv_score: None,
    })
}

/// Default grid: 25 log-spaced values in `[1e-10, 1]`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..25).map(|i| 10f64.powf(-10.0 + 10.0 * i as f64 / 24.0)).collect()
}

/// GCV minimiser over `alphas` (first minimum in grid order) and all scores.
pub fn gcv_select(phi: &DMatrix<f64>, y: &DVector<f64>, alphas: &[f64]) -> Result<(f64, Vec<f64>)> {
    if alphas.is_empty() {
        return Err(NssError::Argument("empty ridge parameter grid".into()));
    }
    for &a in alphas {
        if !(a > 0.0 && a.is_finite()) {
            return Err(NssError::Domain(format!("grid values must be > 0, got {a}")));
        }
    }
    let svd = RidgeSvd::new(phi, y)?;
    let scores: Vec<f64> = alphas.iter().map(|&a| svd.gcv(a)).collect();
    let best = (0..scores.len()).fold(0, |b, i| if scores[i] < scores[b] { i } else { b });
    Ok((alphas[best], scores))
}

/// Monte Carlo MSE of `beta_hat` against the generating `beta` for both
/// ridge variants, per `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageComparison {
    pub lambda: [f64; 2],
    pub alphas: Vec<f64>,
    pub mse_standard: Vec<f64>,
    pub mse_orthogonal: Vec<f64>,
    pub trials: usize,
}

impl ShrinkageComparison {
    pub fn best_standard(&self) -> (f64, f64) {
        best_of(&self.alphas, &self.mse_standard)
    }

    pub fn best_orthogonal(&self) -> (f64, f64) {
        best_of(&self.alphas, &self.mse_orthogonal)
    }

    /// Columns `alpha,mse_standard,mse_orthogonal`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["alpha", "mse_standard", "mse_orthogonal"])?;
        for i in 0..self.alphas.len() {
            out.write_record([
                self.alphas[i].to_string(),
                self.mse_standard[i].to_string(),
                self.mse_orthogonal[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn best_of(alphas: &[f64], mse: &[f64]) -> (f64, f64) {
    let i = (0..mse.len()).fold(0, |b, i| if mse[i] < mse[b] { i } else { b });
    (alphas[i], mse[i])
}

pub fn shrinkage_comparison(
    grid: &MaturityGrid,
    truth: &NssParams,
    sigma: f64,
    alphas: &[f64],
    n_trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<ShrinkageComparison> {
    if alphas.is_empty() || n_trials == 0 {
        return Err(NssError::Argument("need at least one alpha and one trial".into()));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    let phi = design_matrix(grid, truth.lambda)?;
    let fact = thin_qr_positive(&phi)?;
    let beta = truth.beta_vec();
    let y0 = &phi.values * beta;
    let per_trial = exec.map_range(n_trials, |t| -> Result<(Vec<f64>, Vec<f64>)> {
        let y = &y0 + gaussian_vector(&mut trial_rng(seed, t as u64), grid.len(), sigma);
        let svd = RidgeSvd::new(&phi.values, &y)?;
        let gamma = fact.psi.tr_mul(&y);
        let gamma = Vector4::new(gamma[0], gamma[1], gamma[2], gamma[3]);
        let beta_ls = recover_beta(&fact, &gamma, 4)?;
        let std: Vec<f64> = alphas.iter().map(|&a| (svd.solve(a) - beta).norm_squared()).collect();
        let orth: Vec<f64> = alphas
            .iter()
            .map(|&a| (beta_ls / (1.0 + a) - beta).norm_squared())
            .collect();
        Ok((std, orth))
    });
    let mut mse_standard = vec![0.0; alphas.len()];
    let mut mse_orthogonal = vec![0.0; alphas.len()];
    for r in per_trial {
        let (s, o) = r?;
        for i in 0..alphas.len() {
            mse_standard[i] += s[i] / n_trials as f64;
            mse_orthogonal[i] += o[i] / n_trials as f64;
        }
    }
    Ok(ShrinkageComparison {
        lambda: truth.lambda,
        alphas: alphas.to_vec(),
        mse_standard,
        mse_orthogonal,
        trials: n_trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nss::curve_eval;

    fn setup(l2: f64) -> (DMatrix<f64>, DVector<f64>) {
        let g = MaturityGrid::us_treasury_12();
        let p = NssParams::new([0.04, -0.02, 0.015, 0.008], [0.6, l2]).unwrap();
        let mut y = curve_eval(&p, &g).unwrap();
        y += gaussian_vector(&mut trial_rng(3, 0), 12, 5e-5);
        (design_matrix(&g, p.lambda).unwrap().values, y)
    }

    #[test]
    fn filter_and_direct_paths_agree() {
        let (phi, y) = setup(0.55);
        let a = ridge_standard(&phi, &y, 1e-3).unwrap();
        let b = ridge_standard_direct(&phi, &y, 1e-3).unwrap();
        let a = Vector4::from(a.coefficients);
        assert!((a - b).norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn zero_alpha_is_least_squares() {
        let (phi, y) = setup(0.2);
        let fact = qr_fact(&phi);
        let g = fact.psi.tr_mul(&y);
        let ls = recover_beta(&fact, &Vector4::new(g[0], g[1], g[2], g[3]), 4).unwrap();
        let r = Vector4::from(ridge_standard(&phi, &y, 0.0).unwrap().coefficients);
        assert!((r - ls).norm() <= 1e-10 * ls.norm());
        let o = ridge_orthogonal(&fact, &y, 0.0).unwrap();
        assert_eq!(o.coefficients, [g[0], g[1], g[2], g[3]]);
    }

    fn qr_fact(phi: &DMatrix<f64>) -> OrthoFactorization {
        crate::ortho::qr_positive(phi).unwrap()
    }

    #[test]
    fn norm_decreases_with_alpha() {
        let (phi, y) = setup(0.55);
        let mut last = f64::INFINITY;
        for a in default_alpha_grid() {
            let n = Vector4::from(ridge_standard(&phi, &y, a).unwrap().coefficients).norm();
            assert!(n <= last * (1.0 + 1e-12));
            last = n;
        }
        assert!(Vector4::from(ridge_standard(&phi, &y, 1e12).unwrap().coefficients).norm() < 1e-9);
    }

    #[test]
    fn gcv_prefers_small_alpha_for_exact_data() {
        let g = MaturityGrid::us_treasury_12();
        let p = NssParams::new([0.04, -0.02, 0.015, 0.008], [0.6, 0.2]).unwrap();
        let y = curve_eval(&p, &g).unwrap();
        let phi = design_matrix(&g, p.lambda).unwrap().values;
        let grid = default_alpha_grid();
        let (a, scores) = gcv_select(&phi, &y, &grid).unwrap();
        assert_eq!(a, grid[0]);
        assert!(scores.iter().all(|s| s.is_finite() && *s > 0.0));
        assert!(gcv_select(&phi, &y, &[]).is_err());
    }
}
