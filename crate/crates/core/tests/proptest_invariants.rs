use nalgebra::{DMatrix, DVector, Vector4};
use nss_ortho::nss::{curve_eval, design_matrix, loading};
use nss_ortho::ortho::{condition_number, orthogonal_fit, recover_beta, thin_qr_positive};
use nss_ortho::regularization::{ridge_orthogonal, ridge_standard};
use nss_ortho::varpro::reduced_objective;
use nss_ortho::{MaturityGrid, NssParams};
use proptest::prelude::*;

fn grid() -> MaturityGrid {
    MaturityGrid::us_treasury_12()
}

fn separated() -> impl Strategy<Value = [f64; 2]> {
    (0.05f64..3.0, 0.2f64..0.8).prop_map(|(l1, r)| [l1, l1 * r])
}

fn beta() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-0.05f64..0.05)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn qr_is_orthonormal_and_reconstructs(lambda in separated()) {
        let phi = design_matrix(&grid(), lambda).unwrap();
        let f = thin_qr_positive(&phi).unwrap();
        let gram = f.psi.tr_mul(&f.psi);
        prop_assert!((gram - DMatrix::<f64>::identity(4, 4)).norm() < 1e-12);
        let r = DMatrix::from_column_slice(4, 4, f.r.as_slice());
        prop_assert!((&f.psi * r - &phi.values).norm() <= 1e-12 * phi.values.norm());
        for i in 0..4 {
            prop_assert!(f.r[(i, i)] >= 0.0);
            for j in 0..i {
                prop_assert_eq!(f.r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn gamma_beta_round_trip(lambda in separated(), b in beta()) {
        let phi = design_matrix(&grid(), lambda).unwrap();
        prop_assume!(condition_number(&phi) <= 1e4);
        let f = thin_qr_positive(&phi).unwrap();
        let y = curve_eval(&NssParams::new(b, lambda).unwrap(), &grid()).unwrap();
        let g = orthogonal_fit(&f, &y).unwrap();
        prop_assert!((g - f.r * Vector4::from(b)).norm() <= 1e-12 * y.norm().max(1e-3));
        let back = recover_beta(&f, &g, 4).unwrap();
        prop_assert!((back - Vector4::from(b)).norm() <= 1e-10 * Vector4::from(b).norm().max(1e-3));
    }

    #[test]
    fn fitted_curve_is_parametrization_neutral(lambda in separated(), y in prop::collection::vec(-0.05f64..0.05, 12)) {
        let phi = design_matrix(&grid(), lambda).unwrap();
        let f = thin_qr_positive(&phi).unwrap();
        let y = DVector::from_vec(y);
        let g = orthogonal_fit(&f, &y).unwrap();
        let b = recover_beta(&f, &g, 4).unwrap();
        let a = &f.psi * DVector::from_column_slice(g.as_slice());
        let c = &phi.values * DVector::from_column_slice(b.as_slice());
        prop_assert!((a - c).norm() <= 1e-10 * y.norm());
    }

    #[test]
    fn objective_is_bounded_by_the_data(lambda in separated(), y in prop::collection::vec(-0.05f64..0.05, 12)) {
        let y = DVector::from_vec(y);
        let h = reduced_objective(lambda, &grid(), &y).unwrap();
        prop_assert!(h >= 0.0 && h <= y.norm_squared() * (1.0 + 1e-12));
    }

    #[test]
    fn ridge_shrinks(lambda in separated(), b in beta(), a1 in 1e-8f64..1.0, k in 1.0f64..100.0) {
        let phi = design_matrix(&grid(), lambda).unwrap();
        let f = thin_qr_positive(&phi).unwrap();
        let y = curve_eval(&NssParams::new(b, lambda).unwrap(), &grid()).unwrap();
        let a2 = a1 * k;
        let n = |a: f64| Vector4::from(ridge_standard(&phi.values, &y, a).unwrap().coefficients).norm();
        prop_assert!(n(a2) <= n(a1) * (1.0 + 1e-12));
        let g0 = Vector4::from(ridge_orthogonal(&f, &y, 0.0).unwrap().coefficients);
        let g = Vector4::from(ridge_orthogonal(&f, &y, a2).unwrap().coefficients);
        prop_assert!((g * (1.0 + a2) - g0).norm() <= 1e-14 * g0.norm().max(1e-300));
    }

    #[test]
    fn loading_is_smooth_through_the_series_switch(x in 1e-12f64..1.0) {
        let direct = if x > 1e-3 { -(-x).exp_m1() / x } else { 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0 };
        prop_assert!((loading(x) - direct).abs() <= 1e-13);
        prop_assert!(loading(x) <= 1.0 && loading(x) > 0.0);
    }
}
