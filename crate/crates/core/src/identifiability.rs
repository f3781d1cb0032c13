//! Local structural identifiability from the rank of the sensitivity matrix
//! `J = dy/d(beta_1..beta_4, lambda_1, lambda_2)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NssError, Result};
use crate::nss::{check_lambda, design_values, loading, MaturityGrid, NssParams};

/// Default rank threshold relative to the largest singular value.
pub const RANK_TOL: f64 = 1e-9;

/// `m x 6` sensitivity matrix. The `lambda` columns are `g_lambda_k(tau) / tau`:
///
/// `dy/dlambda_1 = (beta_2 + beta_3) / lambda_1 * (e^{-x} - (1 - e^{-x}) / x) + beta_3 tau e^{-x}`
/// with `x = lambda_1 tau`, and the same with `beta_4` alone for `lambda_2`.
pub fn jacobian(params: &NssParams, grid: &MaturityGrid) -> Result<DMatrix<f64>> {
    check_lambda(params.lambda)?;
    let [_, b2, b3, b4] = params.beta;
    let [l1, l2] = params.lambda;
    let taus = grid.taus();
    let phi = design_values(taus, params.lambda);
    let mut j = DMatrix::zeros(taus.len(), 6);
    j.columns_mut(0, 4).copy_from(&phi);
    for (i, &t) in taus.iter().enumerate() {
        let (x1, x2) = (l1 * t, l2 * t);
        let (e1, e2) = ((-x1).exp(), (-x2).exp());
        j[(i, 4)] = (b2 + b3) / l1 * (e1 - loading(x1)) + b3 * t * e1;
        j[(i, 5)] = b4 / l2 * (e2 - loading(x2)) + b4 * t * e2;
    }
    Ok(j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    /// Row-major `m x 6`.
    pub jacobian: Vec<[f64; 6]>,
    pub rank: usize,
    pub singular_values: [f64; 6],
    pub null_basis: Vec<[f64; 6]>,
    pub identifiable_quantities: Vec<String>,
    pub tol: f64,
}

impl IdentifiabilityReport {
    /// Distance of `v` from the numerical null space, relative to `||v||`.
    pub fn null_space_residual(&self, v: &[f64; 6]) -> f64 {
        let v = DVector::from_column_slice(v);
        let mut r = v.clone();
        for n in &self.null_basis {
            let n = DVector::from_column_slice(n);
            r.axpy(-n.dot(&v), &n, 1.0);
        }
        r.norm() / v.norm()
    }
}

const PARAM_LABELS: [&str; 6] = ["beta1", "beta2", "beta3", "beta4", "lambda1", "lambda2"];

/// Numerical rank of `J` (singular values above `tol * sigma_max`) and the
/// null space from the trailing right singular vectors.
pub fn rank_analysis(params: &NssParams, grid: &MaturityGrid, tol: f64) -> Result<IdentifiabilityReport> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(NssError::Argument(format!(
            "rank tolerance must be in (0, 1), got {tol}"
        )));
    }
    let j = jacobian(params, grid)?;
    let m = j.nrows();
    let padded = if m < 6 {
        let mut p = DMatrix::zeros(6, 6);
        p.rows_mut(0, m).copy_from(&j);
        p
    } else {
        j.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: [f64; 6] = std::array::from_fn(|k| svd.singular_values[order[k]]);
    let smax = singular_values[0];
    let rank = singular_values.iter().filter(|&&s| s > tol * smax).count();
    let null_basis = order[rank..]
        .iter()
        .map(|&k| std::array::from_fn(|c| v_t[(k, c)]))
        .collect();
    let degenerate =
        (params.lambda[0] - params.lambda[1]).abs() <= f64::EPSILON * params.lambda[0].max(params.lambda[1]);
    let identifiable_quantities = if rank == 6 {
        PARAM_LABELS.iter().map(|s| s.to_string()).collect()
    } else if rank == 4 && degenerate {
        ["beta1", "beta2", "beta3+beta4", "lambda"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        Vec::new()
    };
    Ok(IdentifiabilityReport {
        jacobian: (0..m).map(|i| std::array::from_fn(|c| j[(i, c)])).collect(),
        rank,
        singular_values,
        null_basis,
        identifiable_quantities,
        tol,
    })
}

/// `n` equally spaced maturities on `(0, t_max]`.
pub fn dense_grid(n: usize, t_max: f64) -> Result<MaturityGrid> {
    MaturityGrid::new((1..=n).map(|i| t_max * i as f64 / n as f64).collect())
}

/// Gram matrix of `{1, tau, e^{-l1 tau}, tau e^{-l1 tau}, tau^2 e^{-l1 tau},
/// e^{-l2 tau}, tau e^{-l2 tau}, tau^2 e^{-l2 tau}}` under the discrete inner
/// product on `grid`, with its smallest eigenvalue.
pub fn sensitivity_basis_gram(lambda: [f64; 2], grid: &MaturityGrid) -> Result<(DMatrix<f64>, f64)> {
    check_lambda(lambda)?;
    let taus = grid.taus();
    let b = DMatrix::from_fn(taus.len(), 8, |i, c| {
        let t = taus[i];
        let l = if c < 5 { lambda[0] } else { lambda[1] };
        match c {
            0 => 1.0,
            1 => t,
            2 | 5 => (-l * t).exp(),
            3 | 6 => t * (-l * t).exp(),
            _ => t * t * (-l * t).exp(),
        }
    });
    let g = b.tr_mul(&b);
    let min_eig = g.clone().symmetric_eigenvalues().min();
    Ok((g, min_eig))
}
