//! Synthetic curves for the eight regimes and the data behind the conditioning
//! table and figures.

use std::io::Write;
use std::str::FromStr;

use nalgebra::{DVector, Matrix4};
use serde::{Deserialize, Serialize};

use crate::covariance::conditional_beta_cov;
use crate::error::{NssError, Result};
use crate::nss::{basis_row, curve_eval, design_matrix, MaturityGrid, NssParams};
use crate::ortho::{condition_number, r_inverse, thin_qr_positive};
use crate::par::Execution;
use crate::rng::{gaussian_vector, trial_rng};

pub const BASELINE_BETA: [f64; 4] = [0.04, -0.02, 0.015, 0.008];
pub const BASELINE_SIGMA: f64 = 5e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    Normal,
    Flat,
    Inverted,
    Humped,
    DoubleHumped,
    NearDegenerate,
    SmallLambda,
    LargeLambda,
}

impl RegimeName {
    pub const ALL: [RegimeName; 8] = [
        RegimeName::Normal,
        RegimeName::Flat,
        RegimeName::Inverted,
        RegimeName::Humped,
        RegimeName::DoubleHumped,
        RegimeName::NearDegenerate,
        RegimeName::SmallLambda,
        RegimeName::LargeLambda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegimeName::Normal => "normal",
            RegimeName::Flat => "flat",
            RegimeName::Inverted => "inverted",
            RegimeName::Humped => "humped",
            RegimeName::DoubleHumped => "double_humped",
            RegimeName::NearDegenerate => "near_degenerate",
            RegimeName::SmallLambda => "small_lambda",
            RegimeName::LargeLambda => "large_lambda",
        }
    }
}

impl FromStr for RegimeName {
    type Err = NssError;

    fn from_str(s: &str) -> Result<Self> {
        RegimeName::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| NssError::Argument(format!("unknown regime '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub name: RegimeName,
    pub params: NssParams,
}

impl Regime {
    pub fn get(name: RegimeName) -> Self {
        let (beta, lambda) = match name {
            RegimeName::Normal => (BASELINE_BETA, [0.6, 0.2]),
            RegimeName::Flat => ([0.03, -0.002, 0.001, 0.0005], [0.6, 0.3]),
            RegimeName::Inverted => ([0.03, 0.02, -0.01, -0.005], [0.5, 0.25]),
            RegimeName::Humped => ([0.035, -0.01, 0.04, 0.0], [0.8, 0.4]),
            RegimeName::DoubleHumped => ([0.035, -0.015, 0.03, -0.02], [1.2, 0.25]),
            RegimeName::NearDegenerate => (BASELINE_BETA, [0.6, 0.55]),
            RegimeName::SmallLambda => (BASELINE_BETA, [0.08, 0.04]),
            RegimeName::LargeLambda => (BASELINE_BETA, [3.0, 1.5]),
        };
        Regime {
            name,
            params: NssParams { beta, lambda },
        }
    }

    pub fn all() -> Vec<Regime> {
        RegimeName::ALL.into_iter().map(Regime::get).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCurve {
    pub grid: MaturityGrid,
    pub y_true: Vec<f64>,
    pub y_noisy: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
    pub regime: Regime,
}

impl SyntheticCurve {
    pub fn y(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y_noisy)
    }
}

/// Regime curve on the 12-tenor grid plus seeded `N(0, sigma^2)` noise.
pub fn generate(regime: &Regime, sigma: f64, seed: u64) -> Result<SyntheticCurve> {
    generate_on(&MaturityGrid::us_treasury_12(), regime, sigma, seed)
}

pub fn generate_on(grid: &MaturityGrid, regime: &Regime, sigma: f64, seed: u64) -> Result<SyntheticCurve> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(NssError::Domain(format!("sigma must be >= 0, got {sigma}")));
    }
    let y_true = curve_eval(&regime.params, grid)?;
    let y_noisy = &y_true + gaussian_vector(&mut trial_rng(seed, 0), grid.len(), sigma);
    Ok(SyntheticCurve {
        grid: grid.clone(),
        y_true: y_true.iter().copied().collect(),
        y_noisy: y_noisy.iter().copied().collect(),
        sigma,
        seed,
        regime: *regime,
    })
}

/// The four conditioning cases at `lambda_1 = 0.6`.
pub const TABLE1_CASES: [(&str, f64); 4] = [
    ("Well-separated", 0.2),
    ("Moderate", 0.4),
    ("Near-degenerate", 0.55),
    ("Very degenerate", 0.59),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub case: String,
    pub lambda: [f64; 2],
    pub kappa: f64,
    pub r44: f64,
    pub std_beta: [f64; 4],
    pub std_gamma: [f64; 4],
    pub max_abs_corr: f64,
    /// Row-major correlation matrix of `beta_hat`.
    pub corr: [[f64; 4]; 4],
}

/// Conditional Fisher statistics for the four cases on the 12-tenor grid.
pub fn table1_report(sigma: f64) -> Result<Vec<Table1Row>> {
    table1_report_on(&MaturityGrid::us_treasury_12(), sigma)
}

pub fn table1_report_on(grid: &MaturityGrid, sigma: f64) -> Result<Vec<Table1Row>> {
    TABLE1_CASES
        .iter()
        .map(|&(case, l2)| {
            let phi = design_matrix(grid, [0.6, l2])?;
            let fact = thin_qr_positive(&phi)?;
            let c = conditional_beta_cov(&phi, sigma)?;
            // Cov(gamma) = sigma^2 (Psi^T Psi)^-1; going through R Cov(beta) R^T
            // would reintroduce the conditioning of Phi.
            let cov_gamma: Matrix4<f64> = fact
                .psi
                .tr_mul(&fact.psi)
                .fixed_view::<4, 4>(0, 0)
                .into_owned()
                .try_inverse()
                .ok_or_else(|| crate::NssError::Degenerate("Psi^T Psi is singular".into()))?
                * (sigma * sigma);
            Ok(Table1Row {
                case: case.to_string(),
                lambda: [0.6, l2],
                kappa: condition_number(&phi),
                r44: fact.r44().abs(),
                std_beta: c.std(),
                std_gamma: std::array::from_fn(|j| cov_gamma[(j, j)].sqrt()),
                max_abs_corr: c.max_abs_corr,
                corr: std::array::from_fn(|i| std::array::from_fn(|j| c.corr[(i, j)])),
            })
        })
        .collect()
}

pub fn write_table1_csv<W: Write>(rows: &[Table1Row], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "case",
        "lambda1",
        "lambda2",
        "kappa",
        "r44",
        "std_beta1",
        "std_beta2",
        "std_beta3",
        "std_beta4",
        "std_gamma",
        "max_abs_corr",
    ])?;
    for r in rows {
        let mut rec = vec![
            r.case.clone(),
            r.lambda[0].to_string(),
            r.lambda[1].to_string(),
            r.kappa.to_string(),
            r.r44.to_string(),
        ];
        rec.extend(r.std_beta.iter().map(|v| v.to_string()));
        rec.push(r.std_gamma[0].to_string());
        rec.push(r.max_abs_corr.to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Correlation matrices of the four cases in long form: `case,i,j,corr`.
pub fn write_correlations_csv<W: Write>(rows: &[Table1Row], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["case", "i", "j", "corr"])?;
    for r in rows {
        for i in 0..4 {
            for j in 0..4 {
                out.write_record([
                    r.case.clone(),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    r.corr[i][j].to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda2: f64,
    pub r44: f64,
    pub kappa: f64,
}

/// `|R_44|` and `kappa` along `lambda_2` at fixed `lambda_1`.
pub fn r44_sweep(lambda1: f64, lambda2_grid: &[f64], grid: &MaturityGrid) -> Result<Vec<SweepRow>> {
    lambda2_grid
        .iter()
        .map(|&l2| {
            let phi = design_matrix(grid, [lambda1, l2])?;
            let fact = thin_qr_positive(&phi)?;
            Ok(SweepRow {
                lambda2: l2,
                r44: fact.r44().abs(),
                kappa: condition_number(&phi),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda2", "r44", "kappa"])?;
    for r in rows {
        out.write_record([r.lambda2.to_string(), r.r44.to_string(), r.kappa.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `log10 kappa` over a `lambda` grid; `None` on the exact diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMap {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// `log10_kappa[i * lambda2.len() + j]`.
    pub log10_kappa: Vec<Option<f64>>,
}

impl ConditionMap {
    pub fn at(&self, i: usize, j: usize) -> Option<f64> {
        self.log10_kappa[i * self.lambda2.len() + j]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lambda1", "lambda2", "log10_kappa"])?;
        for (i, l1) in self.lambda1.iter().enumerate() {
            for (j, l2) in self.lambda2.iter().enumerate() {
                let v = self.at(i, j).map(|v| v.to_string()).unwrap_or_default();
                out.write_record([l1.to_string(), l2.to_string(), v])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub fn condition_map(
    lambda1_grid: &[f64],
    lambda2_grid: &[f64],
    grid: &MaturityGrid,
    exec: Execution,
) -> Result<ConditionMap> {
    for &l in lambda1_grid.iter().chain(lambda2_grid) {
        if !(l > 0.0 && l.is_finite()) {
            return Err(NssError::Domain(format!("decay parameters must be > 0, got {l}")));
        }
    }
    let n2 = lambda2_grid.len();
    let log10_kappa = exec.map_range(lambda1_grid.len() * n2, |k| {
        let (l1, l2) = (lambda1_grid[k / n2], lambda2_grid[k % n2]);
        if l1 == l2 {
            return None;
        }
        design_matrix(grid, [l1, l2])
            .ok()
            .map(|phi| condition_number(&phi).log10())
    });
    Ok(ConditionMap {
        lambda1: lambda1_grid.to_vec(),
        lambda2: lambda2_grid.to_vec(),
        log10_kappa,
    })
}

/// Standard basis `phi_j(tau)` and the discrete-QR basis `psi_j(tau) =
/// phi(tau) R^{-1}`, with `R` from the fit grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisCurves {
    pub lambda: [f64; 2],
    pub tau: Vec<f64>,
    pub phi: Vec<[f64; 4]>,
    pub psi: Vec<[f64; 4]>,
}

impl BasisCurves {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["tau", "phi1", "phi2", "phi3", "phi4", "psi1", "psi2", "psi3", "psi4"])?;
        for k in 0..self.tau.len() {
            let mut rec = vec![self.tau[k].to_string()];
            rec.extend(self.phi[k].iter().map(|v| v.to_string()));
            rec.extend(self.psi[k].iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn basis_curves(lambda: [f64; 2], fit_grid: &MaturityGrid, dense: &[f64]) -> Result<BasisCurves> {
    if lambda[0] == lambda[1] {
        return Err(NssError::Degenerate("basis curves need lambda_1 != lambda_2".into()));
    }
    let phi_fit = design_matrix(fit_grid, lambda)?;
    let fact = thin_qr_positive(&phi_fit)?;
    let rinv = r_inverse(&fact.r)?;
    let mut phi = Vec::with_capacity(dense.len());
    let mut psi = Vec::with_capacity(dense.len());
    for &t in dense {
        if !(t > 0.0 && t.is_finite()) {
            return Err(NssError::Domain(format!("maturity must be > 0, got {t}")));
        }
        let row = basis_row(lambda, t);
        phi.push(row);
        psi.push(std::array::from_fn(|j| (0..4).map(|i| row[i] * rinv[(i, j)]).sum()));
    }
    Ok(BasisCurves {
        lambda,
        tau: dense.to_vec(),
        phi,
        psi,
    })
}

/// Regime yield curves on a dense grid: `tau,<regime>...`.
pub fn write_regime_curves_csv<W: Write>(regimes: &[Regime], dense: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["tau".to_string()];
    head.extend(regimes.iter().map(|r| r.name.as_str().to_string()));
    out.write_record(&head)?;
    for &t in dense {
        let mut rec = vec![t.to_string()];
        for r in regimes {
            rec.push(crate::nss::yield_at(&r.params, t)?.to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
