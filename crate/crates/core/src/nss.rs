//! Svensson basis functions, design matrices and curve evaluation.

use nalgebra::{DMatrix, DVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{NssError, Result};

/// Below this argument `(1 - e^{-x})/x` is evaluated from its Taylor series.
const SERIES_SWITCH: f64 = 1e-4;

/// Ordered, strictly increasing positive maturities in years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturityGrid {
    taus: Vec<f64>,
}

impl MaturityGrid {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(NssError::Domain("maturity grid is empty".into()));
        }
        if !taus.iter().all(|t| t.is_finite() && *t > 0.0) {
            return Err(NssError::Domain("maturities must be finite and > 0".into()));
        }
        if taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(NssError::Domain("maturities must be strictly increasing".into()));
        }
        Ok(Self { taus })
    }

    /// Builds a grid from tenor labels such as `3M`, `1Y`, `30Y`.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let taus = labels
            .iter()
            .map(|l| parse_tenor(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(taus)
    }

    /// 1M, 2M, 3M, 6M, 1Y, 2Y, 3Y, 5Y, 7Y, 10Y, 20Y, 30Y.
    pub fn us_treasury_12() -> Self {
        Self::from_labels(&US_TREASURY_12).expect("static grid is valid")
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// Longest maturity.
    pub fn horizon(&self) -> f64 {
        *self.taus.last().expect("non-empty")
    }
}

pub const US_TREASURY_12: [&str; 12] = [
    "1M", "2M", "3M", "6M", "1Y", "2Y", "3Y", "5Y", "7Y", "10Y", "20Y", "30Y",
];

/// Parses a tenor label (`<n>M` or `<n>Y`, case-insensitive) into years.
/// Month tenors are exact twelfths.
pub fn parse_tenor(label: &str) -> Result<f64> {
    let s = label.trim().to_ascii_uppercase();
    let bad = || NssError::Config(format!("unknown tenor label '{label}'"));
    if s.len() < 2 {
        return Err(bad());
    }
    let (num, unit) = s.split_at(s.len() - 1);
    let n: f64 = num.parse().map_err(|_| bad())?;
    if !(n > 0.0) {
        return Err(bad());
    }
    match unit {
        "M" => Ok(n / 12.0),
        "Y" => Ok(n),
        _ => Err(bad()),
    }
}

/// Linear coefficients (decimal yield units) and the two decay rates (1/years).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NssParams {
    pub beta: [f64; 4],
    pub lambda: [f64; 2],
}

impl NssParams {
    pub fn new(beta: [f64; 4], lambda: [f64; 2]) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self { beta, lambda })
    }

    pub fn beta_vec(&self) -> Vector4<f64> {
        Vector4::from(self.beta)
    }
}

pub(crate) fn check_lambda(lambda: [f64; 2]) -> Result<()> {
    if lambda.iter().all(|l| l.is_finite() && *l > 0.0) {
        Ok(())
    } else {
        Err(NssError::Domain(format!(
            "decay parameters must be > 0, got {lambda:?}"
        )))
    }
}

/// `(1 - e^{-x}) / x`, accurate down to `x -> 0+`.
pub fn loading(x: f64) -> f64 {
    if x < SERIES_SWITCH {
        1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Derivative of [`loading`] with respect to its argument.
pub(crate) fn loading_prime(x: f64) -> f64 {
    if x < 1e-2 {
        -0.5 + x / 3.0 - x * x / 8.0 + x * x * x / 30.0 - x.powi(4) / 144.0
    } else {
        ((-x).exp() - loading(x)) / x
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(NssError::Domain(format!("maturity must be > 0, got {tau}")))
    }
}

/// Value of basis function `j` (1-based) at maturity `tau`.
pub fn basis_value(j: usize, lambda: [f64; 2], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_lambda(lambda)?;
    Ok(match j {
        1 => 1.0,
        2 => loading(lambda[0] * tau),
        3 => hump(lambda[0], tau),
        4 => hump(lambda[1], tau),
        _ => return Err(NssError::Argument(format!("basis index {j} not in 1..=4"))),
    })
}

#[inline]
fn hump(l: f64, tau: f64) -> f64 {
    let x = l * tau;
    loading(x) - (-x).exp()
}

/// Row of the design matrix at one maturity (no validation).
#[inline]
pub(crate) fn basis_row(lambda: [f64; 2], tau: f64) -> [f64; 4] {
    let x = lambda[0] * tau;
    let l1 = loading(x);
    [1.0, l1, l1 - (-x).exp(), hump(lambda[1], tau)]
}

/// Derivative of a basis row with respect to `lambda[k]`.
///
/// `d/dλ1` touches columns 2 and 3 only; `d/dλ2` touches column 4 only.
pub(crate) fn basis_row_dlambda(lambda: [f64; 2], tau: f64, k: usize) -> [f64; 4] {
    let dhump = |l: f64| tau * loading_prime(l * tau) + tau * (-l * tau).exp();
    match k {
        0 => {
            let d2 = tau * loading_prime(lambda[0] * tau);
            [0.0, d2, dhump(lambda[0]), 0.0]
        }
        _ => [0.0, 0.0, 0.0, dhump(lambda[1])],
    }
}

/// The `m x 4` matrix of basis values on a maturity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub grid: MaturityGrid,
    pub lambda: [f64; 2],
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }
}

pub fn design_matrix(grid: &MaturityGrid, lambda: [f64; 2]) -> Result<DesignMatrix> {
    check_lambda(lambda)?;
    Ok(DesignMatrix {
        values: design_values(grid.taus(), lambda),
        grid: grid.clone(),
        lambda,
    })
}

pub(crate) fn design_values(taus: &[f64], lambda: [f64; 2]) -> DMatrix<f64> {
    let m = taus.len();
    let mut phi = DMatrix::zeros(m, 4);
    for (i, &t) in taus.iter().enumerate() {
        let row = basis_row(lambda, t);
        for j in 0..4 {
            phi[(i, j)] = row[j];
        }
    }
    phi
}

/// `d Phi / d lambda_k` on the grid.
pub fn design_matrix_dlambda(grid: &MaturityGrid, lambda: [f64; 2], k: usize) -> DMatrix<f64> {
    let taus = grid.taus();
    let mut d = DMatrix::zeros(taus.len(), 4);
    for (i, &t) in taus.iter().enumerate() {
        let row = basis_row_dlambda(lambda, t, k);
        for j in 0..4 {
            d[(i, j)] = row[j];
        }
    }
    d
}

/// Model yields `Phi(lambda) beta` on the grid.
pub fn curve_eval(params: &NssParams, grid: &MaturityGrid) -> Result<DVector<f64>> {
    check_lambda(params.lambda)?;
    let phi = design_values(grid.taus(), params.lambda);
    Ok(phi * params.beta_vec())
}

/// Model yield at a single maturity.
pub fn yield_at(params: &NssParams, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_lambda(params.lambda)?;
    let row = basis_row(params.lambda, tau);
    Ok((0..4).map(|j| row[j] * params.beta[j]).sum())
}

/// Short-end expansion `y(tau) = level + slope * tau + O(tau^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorCoefficients {
    pub level: f64,
    pub slope: f64,
}

pub fn taylor_coefficients(params: &NssParams) -> TaylorCoefficients {
    let [b1, b2, b3, b4] = params.beta;
    let [l1, l2] = params.lambda;
    TaylorCoefficients {
        level: b1 + b2,
        slope: 0.5 * (l1 * (b3 - b2) + l2 * b4),
    }
}
