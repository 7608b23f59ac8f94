use crm_core::dependence::{is_positive_definite_dense, rho_jacobian};
use crm_core::estimate::{theta_from_unconstrained, theta_to_unconstrained};
use crm_core::validate::{gini_index, validation_metrics};
use crm_core::{
    build_augmented_sigma, build_sigma, check_admissible, is_positive_definite, rho_from_theta,
    schur_complement_factor, FrequencyVector, RhoParams, ThetaParams,
};
use proptest::prelude::*;

/// Admissible loadings with each pair kept strictly inside the unit disc.
fn admissible(margin: f64) -> impl Strategy<Value = ThetaParams> {
    let lim = 1.0 - margin;
    (-lim..lim, -lim..lim, -1.0f64..1.0, -1.0f64..1.0).prop_map(move |(a1, a2, f1, f2)| {
        ThetaParams::new(
            a1,
            a2,
            f1 * lim * (1.0 - a1 * a1).sqrt(),
            f2 * lim * (1.0 - a2 * a2).sqrt(),
        )
    })
}

fn counts() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..=6, 1..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn admissible_loadings_give_positive_definite_sigma(theta in admissible(1e-3), n in counts()) {
        prop_assert!(check_admissible(&theta));
        let fv = FrequencyVector::new(n).unwrap();
        let sigma = build_sigma(&fv, &rho_from_theta(&theta));
        prop_assert!(is_positive_definite(&sigma));
        let aug = build_augmented_sigma(&fv, &theta.rho(), theta.theta1, theta.theta2);
        prop_assert!(is_positive_definite(&aug));
    }

    #[test]
    fn factor_schur_complement_is_block_diagonal(theta in admissible(1e-3), n in counts()) {
        let fv = FrequencyVector::new(n).unwrap();
        let aug = build_augmented_sigma(&fv, &theta.rho(), theta.theta1, theta.theta2);
        let schur = schur_complement_factor(&aug);
        prop_assert!(schur.max_off_block_abs() < 1e-12);
        prop_assert!(is_positive_definite_dense(&schur.entries));
    }

    #[test]
    fn sigma_is_symmetric_with_unit_diagonal(theta in admissible(1e-3), n in counts()) {
        let fv = FrequencyVector::new(n).unwrap();
        let s = build_sigma(&fv, &theta.rho()).entries;
        prop_assert_eq!(s.nrows(), fv.years() + fv.total_claims());
        for i in 0..s.nrows() {
            prop_assert_eq!(s[(i, i)], 1.0);
            for j in 0..s.ncols() {
                prop_assert_eq!(s[(i, j)], s[(j, i)]);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences(theta in admissible(1e-3)) {
        let jac = rho_jacobian(&theta);
        let base = theta.to_array();
        for k in 0..4 {
            let h = 1e-6;
            let mut up = base;
            let mut dn = base;
            up[k] += h;
            dn[k] -= h;
            let fu = rho_from_theta(&ThetaParams::from_array(up)).to_array();
            let fd = rho_from_theta(&ThetaParams::from_array(dn)).to_array();
            for i in 0..5 {
                let approx = (fu[i] - fd[i]) / (2.0 * h);
                prop_assert!((approx - jac[i][k]).abs() < 1e-8, "d rho{} / d theta{}", i + 1, k + 1);
            }
        }
    }

    #[test]
    fn reparameterization_round_trips(theta in admissible(0.02)) {
        let back = theta_from_unconstrained(theta_to_unconstrained(&theta));
        for (a, b) in theta.to_array().iter().zip(back.to_array()) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn every_unconstrained_point_is_admissible(u in prop::array::uniform4(-8.0f64..8.0)) {
        prop_assert!(check_admissible(&theta_from_unconstrained(u)));
    }

    #[test]
    fn correlations_stay_in_range(theta in admissible(1e-6)) {
        let rho = theta.rho();
        prop_assert!(rho.to_array().iter().all(|r| r.abs() < 1.0));
        prop_assert!(rho.rho2 >= rho.rho5 && rho.rho3 >= 0.0);
    }

    #[test]
    fn squared_rmse_is_mse_and_mae_is_smaller(
        pairs in prop::collection::vec((0.0f64..1e4, 0.0f64..1e4), 1..200)
    ) {
        let (a, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = validation_metrics(&a, &p).unwrap();
        prop_assert!((r.rmse * r.rmse - r.mse).abs() <= 1e-9 * r.mse.max(1.0));
        prop_assert!(r.mae <= r.rmse * (1.0 + 1e-12));
    }

    #[test]
    fn gini_is_invariant_under_increasing_affine_maps(
        pairs in prop::collection::vec((0.0f64..1e4, 0.0f64..1e3), 2..200),
        scale in 0.5f64..20.0,
        shift in -100.0f64..100.0,
    ) {
        let (a, s): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let moved: Vec<f64> = s.iter().map(|v| scale * v + shift).collect();
        let g0 = gini_index(&a, &s);
        let g1 = gini_index(&a, &moved);
        prop_assert!((g0 - g1).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&g0));
    }

    #[test]
    fn gini_ignores_input_order(
        pairs in prop::collection::vec((0.0f64..1e4, 0u8..5), 2..100),
        rot in 0usize..100,
    ) {
        // Few distinct scores, so many ties.
        let mut rotated = pairs.clone();
        rotated.rotate_left(rot % pairs.len());
        let split = |v: &[(f64, u8)]| -> (Vec<f64>, Vec<f64>) {
            v.iter().map(|(a, s)| (*a, f64::from(*s))).unzip()
        };
        let (a0, s0) = split(&pairs);
        let (a1, s1) = split(&rotated);
        prop_assert!((gini_index(&a0, &s0) - gini_index(&a1, &s1)).abs() < 1e-12);
    }
}

#[test]
fn reference_rows_map_exactly() {
    let table: [([f64; 4], [f64; 5]); 8] = [
        ([0.3, 0.3, 0.5, 0.5], [0.34, 0.34, 0.09, 0.09, 0.09]),
        ([0.3, 0.3, 0.0, 0.0], [0.09, 0.09, 0.09, 0.09, 0.09]),
        ([0.3, 0.7, 0.5, 0.5], [0.46, 0.74, 0.09, 0.21, 0.49]),
        ([0.3, 0.7, 0.0, 0.0], [0.21, 0.49, 0.09, 0.21, 0.49]),
        ([0.7, 0.3, 0.5, 0.5], [0.46, 0.34, 0.49, 0.21, 0.09]),
        ([0.7, 0.3, 0.0, 0.0], [0.21, 0.09, 0.49, 0.21, 0.09]),
        ([0.7, 0.7, 0.5, 0.5], [0.74, 0.74, 0.49, 0.49, 0.49]),
        ([0.7, 0.7, 0.0, 0.0], [0.49, 0.49, 0.49, 0.49, 0.49]),
    ];
    for (theta, rho) in table {
        let got = rho_from_theta(&ThetaParams::from_array(theta)).to_array();
        for (g, r) in got.iter().zip(rho) {
            assert!((g - r).abs() < 1e-12, "{theta:?}: {got:?}");
        }
    }
}

#[test]
fn incompatible_correlations_fail_positive_definiteness() {
    // Loadings far outside the unit disc.
    let bad = ThetaParams::new(0.9, 0.9, 0.9, 0.9);
    assert!(!check_admissible(&bad));
    let fv = FrequencyVector::new(vec![1, 2]).unwrap();
    assert!(!is_positive_definite(&build_sigma(&fv, &bad.rho())));
    // Exchangeable severities cannot all be strongly negatively correlated.
    let rho = RhoParams::new(0.1, -0.6, 0.1, 0.0, 0.0);
    let fv = FrequencyVector::new(vec![3]).unwrap();
    assert!(!is_positive_definite(&build_sigma(&fv, &rho)));
}

#[test]
fn boundary_loadings_are_not_admissible() {
    assert!(!check_admissible(&ThetaParams::new(0.6, 0.0, 0.8, 0.0)));
    assert!(!check_admissible(&ThetaParams::new(0.0, 1.0, 0.0, 0.0)));
    assert!(!check_admissible(&ThetaParams::new(f64::NAN, 0.0, 0.0, 0.0)));
}
