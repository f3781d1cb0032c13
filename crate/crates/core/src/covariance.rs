//! Conditional and first-order joint covariances of the NSS estimates.
//!
//! With `eta = (gamma, lambda)` and `K = [Psi, G]`, the observed Fisher
//! information is `K^T K / sigma^2`. Its inverse is assembled block-wise from
//! the coupling `C = Psi^T G` and the Schur complement `S = G^T G - C^T C`.
//! Classical coefficients `beta = R(lambda)^{-1} gamma` inherit a covariance by
//! the delta method.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, SMatrix, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{NssError, Result};
use crate::nss::{check_lambda, design_matrix, design_values, DesignMatrix, MaturityGrid, NssParams};
use crate::ortho::{qr_positive, r_inverse, thin_qr_positive, ModelChoice, OrthoFactorization, Selection};
use crate::par::Execution;
use crate::rng::{gaussian_vector, trial_rng};
use crate::varpro::{fit_warm, LambdaBox, OuterConfig};

pub type Matrix4x2 = SMatrix<f64, 4, 2>;
pub type Matrix4x6 = SMatrix<f64, 4, 6>;
pub type Matrix6 = SMatrix<f64, 6, 6>;

/// Central-difference step for `lambda_j`.
pub fn fd_step(lambda_j: f64) -> f64 {
    1e-6 * lambda_j.max(1.0)
}

/// `sigma^2 (Phi^T Phi)^{-1}` and its correlation structure.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalBetaCov {
    pub cov: Matrix4<f64>,
    pub corr: Matrix4<f64>,
    pub max_abs_corr: f64,
    pub degenerate: bool,
}

impl ConditionalBetaCov {
    pub fn std(&self) -> [f64; 4] {
        std::array::from_fn(|j| self.cov[(j, j)].sqrt())
    }
}

/// Computed as `sigma^2 R^{-1} R^{-T}`. A rank-deficient design yields an
/// infinite covariance with the `degenerate` flag set.
pub fn conditional_beta_cov(phi: &DesignMatrix, sigma: f64) -> Result<ConditionalBetaCov> {
    let fact = thin_qr_positive(phi)?;
    let rinv = match r_inverse(&fact.r) {
        Ok(r) if !fact.degenerate => r,
        _ => {
            return Ok(ConditionalBetaCov {
                cov: Matrix4::repeat(f64::INFINITY),
                corr: Matrix4::repeat(f64::NAN),
                max_abs_corr: 1.0,
                degenerate: true,
            })
        }
    };
    let cov = sigma * sigma * rinv * rinv.transpose();
    let (corr, max_abs_corr) = correlation(&cov);
    Ok(ConditionalBetaCov {
        cov,
        corr,
        max_abs_corr,
        degenerate: false,
    })
}

/// Correlation matrix and its largest absolute off-diagonal entry.
pub fn correlation(cov: &Matrix4<f64>) -> (Matrix4<f64>, f64) {
    let d: [f64; 4] = std::array::from_fn(|j| cov[(j, j)].sqrt());
    let corr = Matrix4::from_fn(|i, j| cov[(i, j)] / (d[i] * d[j]));
    let mut max = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                max = max.max(corr[(i, j)].abs());
            }
        }
    }
    (corr, max)
}

/// How derivatives with respect to `lambda` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMethod {
    FiniteDifference,
    #[default]
    Analytic,
}

/// First-order change of a thin QR under `Phi -> Phi + dPhi`.
#[derive(Debug, Clone, PartialEq)]
pub struct QrDifferential {
    pub dpsi: DMatrix<f64>,
    pub dr: Matrix4<f64>,
}

/// With `X = Psi^T dPhi R^{-1}`, the skew part `Omega = Psi^T dPsi` is read off
/// the strict lower triangle of `X`; then `dR = (X - Omega) R` and
/// `dPsi = (dPhi - Psi dR) R^{-1}`.
pub fn qr_differential(fact: &OrthoFactorization, dphi: &DMatrix<f64>) -> Result<QrDifferential> {
    if dphi.nrows() != fact.nrows() || dphi.ncols() != 4 {
        return Err(NssError::DimensionMismatch {
            expected: fact.nrows(),
            got: dphi.nrows(),
        });
    }
    let rinv = r_inverse(&fact.r)?;
    let ptd = fact.psi.tr_mul(dphi);
    let x = Matrix4::from_fn(|i, j| ptd[(i, j)]) * rinv;
    let mut omega = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..i {
            omega[(i, j)] = x[(i, j)];
            omega[(j, i)] = -x[(i, j)];
        }
    }
    let dr = (x - omega) * fact.r;
    let rinv_d = DMatrix::from_fn(4, 4, |i, j| rinv[(i, j)]);
    let dr_d = DMatrix::from_fn(4, 4, |i, j| dr[(i, j)]);
    let dpsi = (dphi - &fact.psi * dr_d) * rinv_d;
    Ok(QrDifferential { dpsi, dr })
}

fn check_separation(lambda: [f64; 2]) -> Result<()> {
    let h = fd_step(lambda[0]).max(fd_step(lambda[1]));
    let separation = (lambda[0] - lambda[1]).abs();
    if separation < 10.0 * h {
        return Err(NssError::StepValidity {
            separation,
            required: 10.0 * h,
        });
    }
    Ok(())
}

fn factor(taus: &[f64], lambda: [f64; 2]) -> Result<OrthoFactorization> {
    qr_positive(&design_values(taus, lambda))
}

fn shifted(lambda: [f64; 2], k: usize, h: f64) -> [f64; 2] {
    let mut l = lambda;
    l[k] += h;
    l
}

/// `(dPsi/dlambda_k, dR/dlambda_k)` at `lambda`.
fn qr_derivative(grid: &MaturityGrid, lambda: [f64; 2], k: usize, method: DerivativeMethod) -> Result<QrDifferential> {
    match method {
        DerivativeMethod::Analytic => {
            let fact = factor(grid.taus(), lambda)?;
            if fact.degenerate {
                return Err(NssError::Degenerate(format!("R is singular at lambda = {lambda:?}")));
            }
            let dphi = crate::nss::design_matrix_dlambda(grid, lambda, k);
            qr_differential(&fact, &dphi)
        }
        DerivativeMethod::FiniteDifference => {
            check_separation(lambda)?;
            let h = fd_step(lambda[k]);
            let lo = shifted(lambda, k, -h);
            check_lambda(lo)?;
            let plus = factor(grid.taus(), shifted(lambda, k, h))?;
            let minus = factor(grid.taus(), lo)?;
            Ok(QrDifferential {
                dpsi: (&plus.psi - &minus.psi) / (2.0 * h),
                dr: (plus.r - minus.r) / (2.0 * h),
            })
        }
    }
}

/// Columns `g_k = d(Psi(lambda) gamma)/d lambda_k`.
pub fn nonlinear_sensitivities(
    lambda: [f64; 2],
    gamma: &Vector4<f64>,
    grid: &MaturityGrid,
    method: DerivativeMethod,
) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    if method == DerivativeMethod::FiniteDifference {
        check_separation(lambda)?;
    }
    let mut g = DMatrix::zeros(grid.len(), 2);
    let gv = DVector::from_column_slice(gamma.as_slice());
    for k in 0..2 {
        let d = qr_derivative(grid, lambda, k, method)?;
        g.set_column(k, &(&d.dpsi * &gv));
    }
    Ok(g)
}

/// `dR/dlambda_k` for `k = 0, 1`.
pub fn r_dot(grid: &MaturityGrid, lambda: [f64; 2], method: DerivativeMethod) -> Result<[Matrix4<f64>; 2]> {
    Ok([
        qr_derivative(grid, lambda, 0, method)?.dr,
        qr_derivative(grid, lambda, 1, method)?.dr,
    ])
}

/// Block covariance of `(gamma, lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCovariance {
    pub cov_gamma: Matrix4<f64>,
    pub cov_lambda: Matrix2<f64>,
    /// `Cov(gamma, lambda)`.
    pub cross: Matrix4x2,
    pub s: Matrix2<f64>,
    pub c: Matrix4x2,
}

impl JointCovariance {
    /// The full 6x6 covariance of `eta = (gamma, lambda)`.
    pub fn assembled(&self) -> Matrix6 {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<4, 4>(0, 0).copy_from(&self.cov_gamma);
        m.fixed_view_mut::<2, 2>(4, 4).copy_from(&self.cov_lambda);
        m.fixed_view_mut::<4, 2>(0, 4).copy_from(&self.cross);
        m.fixed_view_mut::<2, 4>(4, 0).copy_from(&self.cross.transpose());
        m
    }
}

/// Condition number above which `S` is treated as singular.
pub const WEAK_ID_COND: f64 = 1e14;

pub fn full_covariance(fact: &OrthoFactorization, g: &DMatrix<f64>, sigma: f64) -> Result<JointCovariance> {
    if g.nrows() != fact.nrows() || g.ncols() != 2 {
        return Err(NssError::DimensionMismatch {
            expected: fact.nrows(),
            got: g.nrows(),
        });
    }
    let ctd = fact.psi.tr_mul(g);
    let c = Matrix4x2::from_fn(|i, j| ctd[(i, j)]);
    let gtg = g.tr_mul(g);
    let m = Matrix2::from_fn(|i, j| gtg[(i, j)]);
    let s = m - c.transpose() * c;
    let s = 0.5 * (s + s.transpose());
    let eig = s.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond < WEAK_ID_COND) {
        return Err(NssError::WeakIdentification { cond });
    }
    let s_inv = s.try_inverse().ok_or(NssError::WeakIdentification { cond })?;
    let s2 = sigma * sigma;
    let cs = c * s_inv;
    Ok(JointCovariance {
        cov_gamma: s2 * (Matrix4::identity() + cs * c.transpose()),
        cov_lambda: s2 * s_inv,
        cross: -s2 * cs,
        s,
        c,
    })
}

/// Delta-method covariance of `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaCovariance {
    pub cov_beta: Matrix4<f64>,
    /// `D = d beta / d(gamma, lambda)`.
    pub jacobian: Matrix4x6,
    pub warning: Option<String>,
}

impl BetaCovariance {
    pub fn std(&self) -> [f64; 4] {
        std::array::from_fn(|j| self.cov_beta[(j, j)].sqrt())
    }
}

/// Conditioning of `R` above which results carry a warning.
pub const R_COND_WARN: f64 = 1e10;

/// `D = [R^{-1}, -R^{-1} Rdot_1 beta, -R^{-1} Rdot_2 beta]`,
/// `Cov(beta) = D Cov(eta) D^T`.
pub fn beta_cov_delta(
    fact: &OrthoFactorization,
    grid: &MaturityGrid,
    lambda: [f64; 2],
    beta: &Vector4<f64>,
    joint: &JointCovariance,
    method: DerivativeMethod,
) -> Result<BetaCovariance> {
    let rinv = r_inverse(&fact.r)?;
    let rdot = r_dot(grid, lambda, method)?;
    let mut d = Matrix4x6::zeros();
    d.fixed_view_mut::<4, 4>(0, 0).copy_from(&rinv);
    for k in 0..2 {
        let col = -(rinv * rdot[k] * beta);
        d.set_column(4 + k, &col);
    }
    let cov = d * joint.assembled() * d.transpose();
    let cov_beta = 0.5 * (cov + cov.transpose());
    let sv = fact.r.singular_values();
    let cond = sv.max() / sv.min();
    let warning = (!(cond < R_COND_WARN)).then(|| format!("R is ill-conditioned (cond = {cond:.3e})"));
    Ok(BetaCovariance {
        cov_beta,
        jacobian: d,
        warning,
    })
}

/// `sigma^2 = RSS / (m - 4)`.
pub fn estimate_sigma(rss: f64, m: usize) -> Result<f64> {
    if m <= 4 {
        return Err(NssError::Argument(format!(
            "need more than 4 maturities to estimate sigma, got {m}"
        )));
    }
    Ok((rss / (m - 4) as f64).sqrt())
}

/// Joint and delta-method covariances at a fitted point.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherReport {
    pub joint: JointCovariance,
    pub beta: BetaCovariance,
    pub conditional: ConditionalBetaCov,
}

/// Convenience wrapper: sensitivities at `(lambda, beta)`, the Schur blocks and
/// the delta-method covariance of `beta`.
pub fn fisher_report(
    grid: &MaturityGrid,
    params: &NssParams,
    sigma: f64,
    method: DerivativeMethod,
) -> Result<FisherReport> {
    let phi = design_matrix(grid, params.lambda)?;
    let fact = thin_qr_positive(&phi)?;
    let beta = params.beta_vec();
    let gamma = fact.r * beta;
    let g = nonlinear_sensitivities(params.lambda, &gamma, grid, method)?;
    let joint = full_covariance(&fact, &g, sigma)?;
    let beta_cov = beta_cov_delta(&fact, grid, params.lambda, &beta, &joint, method)?;
    let conditional = conditional_beta_cov(&phi, sigma)?;
    Ok(FisherReport {
        joint,
        beta: beta_cov,
        conditional,
    })
}

/// Sample covariance of jointly refit `(beta, lambda)` over noise draws.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloCovariance {
    /// Order `(beta_1..beta_4, lambda_1, lambda_2)`.
    pub mean: [f64; 6],
    pub cov: Matrix6,
    pub draws: usize,
    /// Draws whose fit failed and were skipped.
    pub failures: usize,
}

impl MonteCarloCovariance {
    pub fn cov_beta(&self) -> Matrix4<f64> {
        self.cov.fixed_view::<4, 4>(0, 0).into_owned()
    }

    pub fn cov_lambda(&self) -> Matrix2<f64> {
        self.cov.fixed_view::<2, 2>(4, 4).into_owned()
    }
}

/// Refits `y = Phi(lambda) beta + noise` with the four-column model, warm
/// started at the truth.
pub fn monte_carlo_joint(
    grid: &MaturityGrid,
    params: &NssParams,
    sigma: f64,
    draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarloCovariance> {
    let truth = crate::nss::curve_eval(params, grid)?;
    let sel = Selection::new(sigma, None)?.with_model(ModelChoice::Nss);
    let bx = LambdaBox::default();
    let cfg = OuterConfig {
        execution: Execution::Sequential,
        ..OuterConfig::default()
    };
    let fits = exec.map_range(draws, |i| {
        let y = &truth + gaussian_vector(&mut trial_rng(seed, i as u64), grid.len(), sigma);
        fit_warm(grid, &y, params.lambda, &bx, &sel, &cfg).ok().map(|f| {
            let b = f.inner.beta;
            [b[0], b[1], b[2], b[3], f.lambda[0], f.lambda[1]]
        })
    });
    let ok: Vec<[f64; 6]> = fits.into_iter().flatten().collect();
    let n = ok.len();
    if n < 2 {
        return Err(NssError::OptimizationFailed(
            "fewer than two Monte Carlo fits succeeded".into(),
        ));
    }
    let mut mean = [0.0; 6];
    for v in &ok {
        for j in 0..6 {
            mean[j] += v[j] / n as f64;
        }
    }
    let mut cov = Matrix6::zeros();
    for v in &ok {
        for i in 0..6 {
            for j in 0..6 {
                cov[(i, j)] += (v[i] - mean[i]) * (v[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    Ok(MonteCarloCovariance {
        mean,
        cov,
        draws: n,
        failures: draws - n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> MaturityGrid {
        MaturityGrid::us_treasury_12()
    }

    #[test]
    fn orthonormal_design_gives_identity() {
        let phi = design_matrix(&grid(), [0.6, 0.3]).unwrap();
        let fact = thin_qr_positive(&phi).unwrap();
        let d = DesignMatrix {
            values: fact.psi.clone(),
            grid: grid(),
            lambda: [0.6, 0.3],
        };
        let c = conditional_beta_cov(&d, 2.0).unwrap();
        assert!((c.cov - 4.0 * Matrix4::<f64>::identity()).norm() < 1e-12);
        assert!(c.max_abs_corr < 1e-12);
    }

    #[test]
    fn zero_gamma_gives_zero_sensitivity() {
        for m in [DerivativeMethod::Analytic, DerivativeMethod::FiniteDifference] {
            let g = nonlinear_sensitivities([0.6, 0.3], &Vector4::zeros(), &grid(), m).unwrap();
            assert_eq!(g.norm(), 0.0);
        }
    }

    #[test]
    fn fd_rejects_near_degenerate() {
        let r = nonlinear_sensitivities(
            [0.6, 0.6 + 1e-6],
            &Vector4::repeat(1.0),
            &grid(),
            DerivativeMethod::FiniteDifference,
        );
        assert!(matches!(r, Err(NssError::StepValidity { .. })));
    }

    #[test]
    fn dphi_dlambda2_touches_column_four_only() {
        let d = crate::nss::design_matrix_dlambda(&grid(), [0.6, 0.3], 1);
        assert_eq!(d.columns(0, 3).norm(), 0.0);
        assert!(d.column(3).norm() > 0.0);
    }

    #[test]
    fn qr_differential_keeps_orthonormality_to_first_order() {
        let phi = design_matrix(&grid(), [0.7, 0.25]).unwrap();
        let fact = thin_qr_positive(&phi).unwrap();
        let dphi = crate::nss::design_matrix_dlambda(&grid(), [0.7, 0.25], 0);
        let d = qr_differential(&fact, &dphi).unwrap();
        let w = fact.psi.tr_mul(&d.dpsi);
        assert!((&w + w.transpose()).norm() < 1e-10);
        for i in 1..4 {
            for j in 0..i {
                assert_eq!(d.dr[(i, j)], 0.0);
            }
        }
        let recon = &d.dpsi * DMatrix::from_fn(4, 4, |i, j| fact.r[(i, j)])
            + &fact.psi * DMatrix::from_fn(4, 4, |i, j| d.dr[(i, j)]);
        assert!((recon - dphi).norm() < 1e-10);
    }

    #[test]
    fn sigma_estimate() {
        assert!((estimate_sigma(8.0, 12).unwrap() - 1.0).abs() < 1e-15);
        assert!(estimate_sigma(1.0, 4).is_err());
    }
}
