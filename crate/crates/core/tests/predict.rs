use crm_core::estimate::{FitOptions, ModelVariant};
use crm_core::quadrature::QuadratureConfig;
use crm_core::simulate::{policy_rng, simulate_policy, simulate_portfolio, ScenarioConfig, YearCovariates};
use crm_core::validate::{
    gini_index, nested_model_comparison, predict_aggregate_loss, split_holdout, validation_metrics,
    HoldoutRow, PredictionConfig,
};
use crm_core::{ModelParams, Portfolio, ThetaParams};

fn rows(k: usize) -> Vec<HoldoutRow> {
    (0..k)
        .map(|i| HoldoutRow {
            policy_id: format!("h{i}"),
            year: 4,
            x: vec![1.0],
            w: vec![1.0],
            actual: None,
        })
        .collect()
}

fn scenario(k: usize, policies: usize, seed: u64) -> Portfolio {
    let cfg = ScenarioConfig {
        policies,
        seed,
        ..ScenarioConfig::reference(k).unwrap()
    };
    simulate_portfolio(&cfg, false).unwrap().portfolio
}

fn fit_options() -> FitOptions {
    FitOptions {
        compute_standard_errors: false,
        quadrature: QuadratureConfig {
            factor_nodes: 24,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn independent_prediction_is_compound_poisson_mean() {
    let params = ModelParams::intercept_only(2.0, 500.0, 0.9, ThetaParams::ZERO);
    let cfg = PredictionConfig {
        samples: 20_000,
        seed: 5,
        ..Default::default()
    };
    for p in predict_aggregate_loss(&rows(10), &params, &cfg).unwrap() {
        assert!((p.predicted - 1000.0).abs() < 3.0 * p.std_error, "{} +- {}", p.predicted, p.std_error);
    }
}

#[test]
fn single_sample_prediction_is_reproducible() {
    let params = ScenarioConfig::reference(1).unwrap().model_params();
    let cfg = PredictionConfig {
        samples: 1,
        seed: 42,
        ..Default::default()
    };
    let a = predict_aggregate_loss(&rows(50), &params, &cfg).unwrap();
    let b = predict_aggregate_loss(&rows(50), &params, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|p| p.std_error == 0.0));
    // A single draw is one simulated year from the row's own stream.
    let mut rng = policy_rng(42, 7);
    let (h, _) = simulate_policy(&params, "h7", &[YearCovariates::intercept_only(4)], &mut rng).unwrap();
    assert_eq!(a[7].predicted, h.years[0].claim.total());
}

#[test]
fn full_model_prediction_matches_large_reference() {
    let params = ScenarioConfig::reference(1).unwrap().model_params();
    let pred = predict_aggregate_loss(
        &rows(1),
        &params,
        &PredictionConfig {
            samples: 20_000,
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap()[0]
        .clone();

    let draws = 1_000_000u64;
    let cov = [YearCovariates::intercept_only(1)];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut rng = policy_rng(999, 0);
    for _ in 0..draws {
        let s = simulate_policy(&params, "r", &cov, &mut rng).unwrap().0.years[0].claim.total();
        sum += s;
        sum_sq += s * s;
    }
    let n = draws as f64;
    let mean = sum / n;
    let se_ref = ((sum_sq / n - mean * mean) / n).sqrt();
    let se = (pred.std_error.powi(2) + se_ref.powi(2)).sqrt();
    assert!((pred.predicted - mean).abs() < 3.0 * se, "{} vs {mean}", pred.predicted);
}

#[test]
fn doubling_samples_moves_prediction_by_monte_carlo_noise() {
    let params = ScenarioConfig::reference(3).unwrap().model_params();
    let run = |samples| {
        predict_aggregate_loss(
            &rows(40),
            &params,
            &PredictionConfig {
                samples,
                seed: 8,
                ..Default::default()
            },
        )
        .unwrap()
    };
    let (a, b) = (run(2000), run(4000));
    let outside = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| (x.predicted - y.predicted).abs() > 4.0 * x.std_error)
        .count();
    assert!(outside <= 1, "{outside} of 40 rows moved by more than 4 SE");
}

#[test]
fn prediction_restricts_loadings_to_the_variant() {
    let params = ScenarioConfig::reference(7).unwrap().model_params();
    let mut zeroed = params.clone();
    zeroed.theta = ThetaParams::ZERO;
    let cfg = PredictionConfig {
        samples: 300,
        seed: 3,
        variant: ModelVariant::Independent,
    };
    let a = predict_aggregate_loss(&rows(5), &params, &cfg).unwrap();
    let b = predict_aggregate_loss(&rows(5), &zeroed, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(predict_aggregate_loss(&rows(1), &params, &PredictionConfig { samples: 0, ..cfg }).is_err());
}

#[test]
fn hand_built_lorenz_curve() {
    // Sorted by score the losses are 1, 2, 3, 4 out of 10; the curve passes
    // through 0.1, 0.3, 0.6, 1.0 at quarter steps.
    let actual = [3.0, 1.0, 4.0, 2.0];
    let score = [0.5, 0.1, 0.9, 0.2];
    let area = 0.25 * (0.5 * 0.1 + 0.5 * (0.1 + 0.3) + 0.5 * (0.3 + 0.6) + 0.5 * (0.6 + 1.0));
    let want = 2.0 * (0.5 - area);
    assert!((gini_index(&actual, &score) - want).abs() < 1e-15);
    assert!((validation_metrics(&actual, &score).unwrap().gini - 100.0 * want).abs() < 1e-12);
    assert_eq!(gini_index(&actual, &[1.0; 4]), 0.0);
    let rescaled: Vec<f64> = score.iter().map(|s| 2.0 * s + 1.0).collect();
    assert_eq!(gini_index(&actual, &score), gini_index(&actual, &rescaled));
}

#[test]
fn metric_arithmetic_and_length_check() {
    let r = validation_metrics(&[0.0, 0.0, 10.0], &[1.0, 1.0, 1.0]).unwrap();
    assert!((r.mse - 83.0 / 3.0).abs() < 1e-12);
    assert!((r.mae - 11.0 / 3.0).abs() < 1e-12);
    assert!((r.rmse * r.rmse - r.mse).abs() < 1e-9);
    assert!(validation_metrics(&[1.0], &[1.0, 2.0]).is_err());
    assert!(validation_metrics(&[], &[]).is_err());
}

#[test]
fn variants_agree_when_truth_is_independent() {
    let cfg = ScenarioConfig {
        policies: 400,
        seed: 21,
        ..ScenarioConfig::reference(1).unwrap()
    };
    let cfg = ScenarioConfig {
        theta: ThetaParams::ZERO,
        ..cfg
    };
    let data = simulate_portfolio(&cfg, false).unwrap().portfolio;
    let (train, holdout) = split_holdout(&data, 3);
    let prediction = PredictionConfig {
        samples: 2000,
        seed: 4,
        ..Default::default()
    };
    let cmp = nested_model_comparison(
        &train,
        &holdout,
        &cfg.model_params(),
        &ModelVariant::ALL,
        &fit_options(),
        &prediction,
    )
    .unwrap();
    assert_eq!(cmp.rows.len(), 4);
    let base = cmp.rows[3].report;
    for row in &cmp.rows {
        assert!(((row.report.rmse - base.rmse) / base.rmse).abs() < 0.01, "{:?}", row);
        assert!(((row.report.mae - base.mae) / base.mae).abs() < 0.02, "{:?}", row);
        // Nested fits never beat the larger model in likelihood.
        assert!(row.log_likelihood <= cmp.rows[0].log_likelihood + 1e-3);
    }
    for (preds, fit) in cmp.predictions.iter().zip(&cmp.fits) {
        let mean = preds.iter().map(|p| p.predicted).sum::<f64>() / preds.len() as f64;
        let implied = fit.estimates.frequency.coefficients[0].exp() * fit.estimates.severity.coefficients[0].exp();
        assert!(((mean - implied) / implied).abs() < 0.1, "{mean} vs {implied}");
    }
}

#[test]
fn comparison_is_deterministic() {
    let data = scenario(2, 150, 6);
    let (train, holdout) = split_holdout(&data, 3);
    let template = ScenarioConfig::reference(2).unwrap().model_params();
    let prediction = PredictionConfig {
        samples: 200,
        seed: 9,
        ..Default::default()
    };
    let variants = [ModelVariant::NoWithinYear, ModelVariant::Independent];
    let run = || {
        nested_model_comparison(&train, &holdout, &template, &variants, &fit_options(), &prediction).unwrap()
    };
    assert_eq!(run(), run());
}

// Without covariates both variants predict one constant per portfolio and
// both constants estimate the same mean loss, so the ranking is dominated by
// hold-out noise. Run with `--ignored` to see the tally.
#[test]
#[ignore = "ranking of constant predictions is close to a coin flip"]
fn full_model_usually_beats_independence_on_dependent_data() {
    let template = ScenarioConfig::reference(1).unwrap().model_params();
    let variants = [ModelVariant::Full, ModelVariant::Independent];
    let mut wins = 0;
    for rep in 0..20 {
        let data = scenario(1, 500, 300 + rep);
        let (train, holdout) = split_holdout(&data, 3);
        let prediction = PredictionConfig {
            samples: 2000,
            seed: rep,
            ..Default::default()
        };
        let cmp = nested_model_comparison(&train, &holdout, &template, &variants, &fit_options(), &prediction)
            .unwrap();
        if cmp.rows[0].report.mse <= cmp.rows[1].report.mse {
            wins += 1;
        }
    }
    println!("full model MSE no larger in {wins} of 20 replications");
    assert!(wins > 10, "full model won {wins} of 20");
}
