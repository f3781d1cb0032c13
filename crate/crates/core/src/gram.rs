//! Closed-form finite-horizon Gram matrix of the Svensson basis in `L^2(0, T)`,
//! its Cholesky factor (a continuous orthonormal basis), and the infinite-horizon
//! Gram matrix of the decaying subspace.

use nalgebra::{Matrix3, Matrix4, Vector4};
use serde::Serialize;

use crate::error::{NssError, Result};
use crate::nss::{basis_row, check_lambda};
use crate::ortho::qr_positive;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const E1_SWITCH: f64 = 1.0;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(NssError::Domain(format!("{name} must be > 0, got {v}")))
    }
}

/// Exponential integral `E_1(x)` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    check_positive("x", x)?;
    Ok(if x <= E1_SWITCH {
        e1_series(x)
    } else {
        e1_continued_fraction(x)
    })
}

/// `Ein(x) = sum_{k>=1} (-1)^{k+1} x^k / (k k!) = gamma + ln x + E_1(x)`.
fn ein_series(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -x / kf;
        let add = -term / kf;
        sum += add;
        if add.abs() <= f64::EPSILON * 0.25 * sum.abs() {
            break;
        }
    }
    sum
}

/// Power series, accurate for small and moderate `x`.
pub fn e1_series(x: f64) -> f64 {
    ein_series(x) - EULER_GAMMA - x.ln()
}

/// Modified Lentz evaluation of the continued fraction
/// `E_1(x) = e^{-x} / (x + 1 - 1^2/(x + 3 - 2^2/(x + 5 - ...)))`.
pub fn e1_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() <= f64::EPSILON {
            break;
        }
    }
    h * (-x).exp()
}

/// `gamma + ln x + E_1(x)`, cancellation-free for small `x`.
fn ein(x: f64) -> f64 {
    if x <= E1_SWITCH {
        ein_series(x)
    } else {
        EULER_GAMMA + x.ln() + e1_continued_fraction(x)
    }
}

/// The four integrals the Gram entries are assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HelperIntegrals {
    /// `int_0^T e^{-a t} dt`
    pub i_t: f64,
    /// `int_0^T (1 - e^{-a t})/(a t) dt`
    pub f_t: f64,
    /// `int_0^T (1 - e^{-a t})/(a t) e^{-b t} dt`
    pub fe_t: f64,
    /// `int_0^T (1 - e^{-a t})/(a t) (1 - e^{-b t})/(b t) dt`
    pub k_t: f64,
}

pub fn helper_integrals(a: f64, b: f64, horizon: f64) -> Result<HelperIntegrals> {
    check_positive("a", a)?;
    check_positive("b", b)?;
    check_positive("T", horizon)?;
    Ok(HelperIntegrals {
        i_t: i_t(a, horizon),
        f_t: f_t(a, horizon),
        fe_t: fe_t(a, b, horizon),
        k_t: k_t(a, b, horizon),
    })
}

fn i_t(a: f64, t: f64) -> f64 {
    -(-a * t).exp_m1() / a
}

fn f_t(a: f64, t: f64) -> f64 {
    ein(a * t) / a
}

fn fe_t(a: f64, b: f64, t: f64) -> f64 {
    let c = a + b;
    if b * t >= E1_SWITCH {
        ((c / b).ln() + e1_continued_fraction(c * t) - e1_continued_fraction(b * t)) / a
    } else {
        // ln((a+b)/b) + E1((a+b)T) - E1(bT) == Ein((a+b)T) - Ein(bT)
        (ein(c * t) - ein(b * t)) / a
    }
}

fn k_t(a: f64, b: f64, t: f64) -> f64 {
    let c = a + b;
    // 1 - e^{-aT} - e^{-bT} + e^{-(a+b)T} == (1 - e^{-aT})(1 - e^{-bT})
    let boundary = (-a * t).exp_m1() * (-b * t).exp_m1() / t;
    let core = if a.min(b) * t >= E1_SWITCH {
        a * (c / a).ln() + b * (c / b).ln() + c * e1_continued_fraction(c * t)
            - a * e1_continued_fraction(a * t)
            - b * e1_continued_fraction(b * t)
    } else {
        // logarithms and Euler constants cancel exactly in the Ein form
        c * ein(c * t) - a * ein(a * t) - b * ein(b * t)
    };
    (core - boundary) / (a * b)
}

/// Symmetric `4 x 4` matrix of `<phi_i, phi_j>` on `(0, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub g: Matrix4<f64>,
    pub horizon: f64,
    pub lambda: [f64; 2],
}

pub fn gram_matrix(lambda: [f64; 2], horizon: f64) -> Result<GramMatrix> {
    check_lambda(lambda)?;
    check_positive("T", horizon)?;
    let [a, b] = lambda;
    let t = horizon;
    let kaa = k_t(a, a, t);
    let kab = k_t(a, b, t);
    let kbb = k_t(b, b, t);
    let feaa = fe_t(a, a, t);
    let feab = fe_t(a, b, t);
    let feba = fe_t(b, a, t);
    let febb = fe_t(b, b, t);
    let fa = f_t(a, t);
    let fb = f_t(b, t);

    let mut g = Matrix4::zeros();
    g[(0, 0)] = t;
    g[(0, 1)] = fa;
    g[(0, 2)] = fa - i_t(a, t);
    g[(0, 3)] = fb - i_t(b, t);
    g[(1, 1)] = kaa;
    g[(1, 2)] = kaa - feaa;
    g[(1, 3)] = kab - feab;
    g[(2, 2)] = kaa - 2.0 * feaa + i_t(2.0 * a, t);
    g[(2, 3)] = kab - feab - feba + i_t(a + b, t);
    g[(3, 3)] = kbb - 2.0 * febb + i_t(2.0 * b, t);
    for i in 0..4 {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    Ok(GramMatrix { g, horizon, lambda })
}

/// Cholesky factor `G_T = L L^T` and the induced continuous orthonormal basis
/// `psi_T = L^{-1} phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousBasis {
    pub l: Matrix4<f64>,
    /// `R_T = L^T`
    pub r_t: Matrix4<f64>,
    pub lambda: [f64; 2],
    pub horizon: f64,
    /// 1-based index of the first non-positive Cholesky pivot, if any.
    pub zero_pivot: Option<usize>,
}

impl ContinuousBasis {
    pub fn is_degenerate(&self) -> bool {
        self.zero_pivot.is_some()
    }

    /// Continuous analogue of the `R_44` diagnostic.
    pub fn r44(&self) -> f64 {
        self.r_t[(3, 3)]
    }

    /// `psi_T(tau)`; errors when the factor is degenerate.
    pub fn eval(&self, tau: f64) -> Result<Vector4<f64>> {
        if let Some(k) = self.zero_pivot {
            return Err(NssError::Degenerate(format!(
                "Gram matrix is not positive definite (pivot {k})"
            )));
        }
        check_positive("tau", tau)?;
        let phi = Vector4::from(basis_row(self.lambda, tau));
        let mut out = Vector4::zeros();
        for i in 0..4 {
            let s: f64 = (0..i).map(|k| self.l[(i, k)] * out[k]).sum();
            out[i] = (phi[i] - s) / self.l[(i, i)];
        }
        Ok(out)
    }
}

/// Cholesky with an explicit zero-pivot flag instead of failure.
pub fn cholesky_flagged(g: &Matrix4<f64>) -> (Matrix4<f64>, Option<usize>) {
    let scale = (0..4).map(|i| g[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let mut l = Matrix4::zeros();
    for j in 0..4 {
        let pivot = g[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if pivot <= tol {
            return (l, Some(j + 1));
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..4 {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            l[(i, j)] = (g[(i, j)] - s) / d;
        }
    }
    (l, None)
}

pub fn continuous_basis(lambda: [f64; 2], horizon: f64) -> Result<ContinuousBasis> {
    let gm = gram_matrix(lambda, horizon)?;
    let (l, zero_pivot) = cholesky_flagged(&gm.g);
    Ok(ContinuousBasis {
        l,
        r_t: l.transpose(),
        lambda,
        horizon,
        zero_pivot,
    })
}

/// Discrete `R_44` on a uniform midpoint grid of `n` points over `(0, T]`,
/// scaled by `sqrt(dtau)` so it is comparable with the continuous `(R_T)_44`.
pub fn scaled_discrete_r44(lambda: [f64; 2], horizon: f64, n: usize) -> Result<f64> {
    check_lambda(lambda)?;
    check_positive("T", horizon)?;
    if n < 4 {
        return Err(NssError::Argument("refinement grid needs >= 4 points".into()));
    }
    let dt = horizon / n as f64;
    let taus: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dt).collect();
    let phi = crate::nss::design_values(&taus, lambda);
    let f = qr_positive(&phi)?;
    Ok(f.r44() * dt.sqrt())
}

/// `T -> infinity` Gram matrix of `span{phi_2, phi_3, phi_4}`.
pub fn decaying_gram_infinite(lambda: [f64; 2]) -> Result<Matrix3<f64>> {
    check_lambda(lambda)?;
    let [a, b] = lambda;
    let i_inf = |x: f64| 1.0 / x;
    let fe_inf = |x: f64, y: f64| ((x + y) / y).ln() / x;
    let k_inf = |x: f64, y: f64| (x * ((x + y) / x).ln() + y * ((x + y) / y).ln()) / (x * y);

    let mut g = Matrix3::zeros();
    g[(0, 0)] = k_inf(a, a);
    g[(0, 1)] = k_inf(a, a) - fe_inf(a, a);
    g[(0, 2)] = k_inf(a, b) - fe_inf(a, b);
    g[(1, 1)] = k_inf(a, a) - 2.0 * fe_inf(a, a) + i_inf(2.0 * a);
    g[(1, 2)] = k_inf(a, b) - fe_inf(a, b) - fe_inf(b, a) + i_inf(a + b);
    g[(2, 2)] = k_inf(b, b) - 2.0 * fe_inf(b, b) + i_inf(2.0 * b);
    for i in 0..3 {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    Ok(g)
}
